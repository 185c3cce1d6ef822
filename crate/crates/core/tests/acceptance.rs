//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topocam::adjacency::{derive_arcs, resolve_property, RelProperty, Resolution};
use topocam::curvature::{vertex_curvatures, ShapeProperty};
use topocam::export::final_graph_json;
use topocam::fixtures::{self, DihedralFixture, Scene};
use topocam::macro_id::{
    propagate_relations, Advance, DecisionInput, Identifier, IdentifyOptions, MacroId, MacroKind, RelationKind, Stage, TopoGraph,
};
use topocam::mesh::{weld_and_connect, write_stl_binary, Vector};
use topocam::segmentation::{refresh_boundaries, FeatureId, FeatureKind, GeomFeature, MachiningSetup};
use topocam::session::{Session, SessionConfig, SessionStore};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn identifier(scene: &Scene) -> Identifier {
    let mesh = weld_and_connect(&scene.soup().mesh(), 1e-7).expect("scene welds");
    Identifier::new(mesh, MachiningSetup::default(), IdentifyOptions::default())
}

fn mid(s: &str) -> MacroId {
    s.parse().unwrap()
}

type RelKey = (RelationKind, String, String, bool);

fn relation_set(g: &TopoGraph) -> BTreeSet<RelKey> {
    g.relations.iter().map(|r| (r.kind, r.from.to_string(), r.to.to_string(), r.propagated)).collect()
}

fn rel(kind: RelationKind, from: &str, to: &str, propagated: bool) -> RelKey {
    (kind, from.to_string(), to.to_string(), propagated)
}

// 1. Material angle on randomized dihedrals.

fn dihedral_arc_resolution(fx: DihedralFixture) -> Resolution {
    let mesh = weld_and_connect(&fx.soup.clone().mesh(), 1e-9).expect("dihedral welds");
    let mk = |kind, faces: &Vec<usize>| GeomFeature {
        id: FeatureId::new(kind, 1),
        kind,
        faces: faces.clone(),
        shape_property: ShapeProperty::Unspecified,
        boundary_loops: Vec::new(),
        sub_of: None,
        aggregate: false,
    };
    let mut features = vec![mk(FeatureKind::Bottom, &fx.first), mk(FeatureKind::Flank, &fx.second), mk(FeatureKind::Transition, &fx.chamfer)];
    refresh_boundaries(&mesh, &mut features);
    let arcs = derive_arcs(&features, 0);
    resolve_property(&arcs[0], &features, &mesh, &MachiningSetup::default(), 5).resolution
}

fn random_pose(rng: &mut ChaCha8Rng) -> Isometry3<f64> {
    let axis = Unit::new_normalize(Vector::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0) + 1e-3));
    let rotation = UnitQuaternion::from_axis_angle(&axis, rng.gen_range(0.0..2.0 * PI));
    let t = Translation3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
    Isometry3::from_parts(t, rotation)
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut wrong = Vec::new();
    for i in 0..500 {
        // The (10, 170) degree range already stays clear of the flat case.
        let opening: f64 = rng.gen_range(10.0..170.0);
        // Unflipped, the air fills the wedge: a pocket-like concave corner.
        let convex = rng.gen_bool(0.5);
        let mut fx = fixtures::dihedral(opening.to_radians(), rng.gen_range(0.1..0.5), rng.gen_range(2.0..5.0), rng.gen_range(2.0..6.0), 4);
        if convex {
            fx = fx.flipped();
        }
        let fx = fx.transformed(&random_pose(&mut rng));
        let expected = if convex { Resolution::Convex } else { Resolution::Concave };
        let got = dihedral_arc_resolution(fx);
        if got != expected {
            wrong.push(format!("#{i} {opening:.1}deg expected {expected:?} got {got:?}"));
        }
    }
    let elapsed = start.elapsed();
    ensure(wrong.is_empty(), || format!("{} of 500 wrong, first: {}", wrong.len(), wrong[0]))?;
    ensure(elapsed < Duration::from_secs(5), || format!("500/500 correct but took {elapsed:.2?}"))?;
    Ok(format!("500/500 dihedrals match, {elapsed:.2?}"))
}

// 2. Plate with a pocket holding a short and a tall boss.

fn criterion_2() -> Check {
    let id = identifier(&fixtures::stepped_pocket_scene());
    let mut g = id.primary_graph();
    let step = id.advance(&mut g).map_err(|e| e.to_string())?;
    ensure(step == Advance::Finalized, || "identification asked for a decision".into())?;
    let kinds: Vec<(String, MacroKind)> = g.macros.iter().map(|m| (m.id.to_string(), m.kind)).collect();
    ensure(g.macros.len() == 4, || format!("macros {kinds:?}"))?;
    let tall = g.macro_by_id(mid("protrusion-1")).ok_or("no protrusion-1")?;
    let short = g.macro_by_id(mid("protrusion-2")).ok_or("no protrusion-2")?;
    ensure(tall.top_level > short.top_level, || "protrusion-1 is not the tall boss".into())?;
    let expected: BTreeSet<RelKey> = [
        rel(RelationKind::Oversteps, "protrusion-1", "cavity-1", false),
        rel(RelationKind::BelongsTo, "protrusion-2", "cavity-1", false),
        rel(RelationKind::SuperposedOn, "parting-surface-1", "cavity-1", false),
        rel(RelationKind::Oversteps, "protrusion-1", "parting-surface-1", true),
    ]
    .into();
    let got = relation_set(&g);
    ensure(got == expected, || format!("relations {got:?}"))?;
    Ok("4 macros, relation set matches exactly".into())
}

// 3 and 4. Forging die.

fn die_identifier() -> Identifier {
    let mesh = weld_and_connect(&fixtures::die_soup().mesh(), 1e-7).expect("die welds");
    Identifier::new(mesh, MachiningSetup::default(), IdentifyOptions::default())
}

fn count_kind(g: &TopoGraph, kind: FeatureKind) -> usize {
    g.features.iter().filter(|f| f.kind == kind).count()
}

fn criterion_3(id: &Identifier) -> Check {
    let mut g = id.primary_graph();
    let counts = (count_kind(&g, FeatureKind::Bottom), count_kind(&g, FeatureKind::Flank), count_kind(&g, FeatureKind::Transition));
    ensure(counts == (6, 4, 6), || format!("segmented into {counts:?} bottoms/flanks/transitions"))?;
    let Advance::AwaitingDecision(queries) = id.advance(&mut g).map_err(|e| e.to_string())? else {
        return Err("finished without a query".into());
    };
    ensure(queries.len() == 1, || format!("{} queries", queries.len()))?;
    let before: Vec<(String, u8, u32)> = g.macros.iter().map(|m| (m.id.to_string(), m.step, m.iteration)).collect();
    let want_before = vec![
        ("parting-surface-1".to_string(), 1, 0),
        ("cavity-1".to_string(), 2, 1),
        ("cavity-2".to_string(), 2, 2),
    ];
    ensure(before == want_before, || format!("before the decision: {before:?}"))?;

    let d = fixtures::die_decision(&g, &id.mesh).ok_or("no scripted decision")?;
    let flank_parts = d.feature_splits.values().next().map_or(0, Vec::len);
    let transition_parts = d.transition_splits.values().next().map_or(0, Vec::len);
    id.apply(&mut g, &DecisionInput::Decomposition(d)).map_err(|e| e.to_string())?;
    let step = id.advance(&mut g).map_err(|e| e.to_string())?;
    ensure(step == Advance::Finalized, || "a second query was raised".into())?;
    let after: Vec<_> = g.macros.iter().filter(|m| m.round == 1).collect();
    let names: Vec<String> = after.iter().map(|m| m.id.to_string()).collect();
    ensure(names == ["cavity-3", "cavity-4", "cavity-5"], || format!("after the decision: {names:?}"))?;
    let multi = after.iter().filter(|m| m.members.iter().filter(|f| f.kind == FeatureKind::Flank).count() > 1).count();
    ensure(multi >= 1, || "no cavity with multiple flanks".into())?;

    let expected: BTreeSet<RelKey> = [
        rel(RelationKind::SuperposedOn, "cavity-2", "cavity-1", false),
        rel(RelationKind::SuperposedOn, "cavity-3", "cavity-2", false),
        rel(RelationKind::OpensOnto, "cavity-3", "cavity-4", false),
        rel(RelationKind::OpensOnto, "cavity-4", "cavity-3", false),
        rel(RelationKind::OpensOnto, "cavity-4", "cavity-5", false),
        rel(RelationKind::SuperposedOn, "parting-surface-1", "cavity-3", false),
        rel(RelationKind::SuperposedOn, "parting-surface-1", "cavity-4", false),
        rel(RelationKind::SuperposedOn, "parting-surface-1", "cavity-5", false),
    ]
    .into();
    let got = relation_set(&g);
    ensure(got == expected, || format!("relations {got:?}"))?;
    Ok(format!(
        "1 query, cavities 1-2 in step-2 iterations 1-2, cavities 3-5 after the decision, 8 relations match; \
         the scripted split has {flank_parts} flank and {transition_parts} transition parts on this geometry"
    ))
}

fn criterion_4(id: &Identifier) -> Check {
    let g = id.primary_graph();
    let simple: Vec<_> = g.arcs.iter().filter(|a| !a.complex && a.ends.len() == 2).collect();
    let concave = simple.iter().filter(|a| a.property == RelProperty::Concave).count();
    let convex = simple.iter().filter(|a| a.property == RelProperty::Convex).count();
    let complex = g.arcs.iter().filter(|a| a.complex).count();
    ensure((simple.len(), concave, convex, complex) == (5, 2, 3, 1), || {
        format!("{} simple ({concave} concave, {convex} convex), {complex} complex", simple.len())
    })?;
    Ok("5 simple arcs (2 concave, 3 convex), 1 complex".into())
}

// 5. Curvature.

fn criterion_5() -> Check {
    let start = Instant::now();
    let sphere = weld_and_connect(&fixtures::icosphere(2.0, 3).mesh(), 1e-9).map_err(|e| e.to_string())?;
    let curv = vertex_curvatures(&sphere);
    let interior: Vec<_> = curv.defined().map(|(_, c)| c).collect();
    let good = interior
        .iter()
        .filter(|c| (c.gaussian - 0.25).abs() <= 0.05 * 0.25 && (c.mean.abs() - 0.5).abs() <= 0.05 * 0.5)
        .count();
    let share = good as f64 / interior.len() as f64;
    let grid = weld_and_connect(&fixtures::flat_grid(10.0, 20).mesh(), 1e-9).map_err(|e| e.to_string())?;
    let flat = vertex_curvatures(&grid);
    let worst = flat.defined().map(|(_, c)| c.gaussian.abs().max(c.mean.abs())).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    ensure(share >= 0.95, || format!("only {:.1}% of sphere vertices within 5%", share * 100.0))?;
    ensure(worst < 1e-9, || format!("flat grid curvature {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(2), || format!("took {elapsed:.2?}"))?;
    Ok(format!("{:.1}% of {} sphere vertices within 5%, flat max {worst:.1e}, {elapsed:.2?}", share * 100.0, interior.len()))
}

// 6. Determinism and resume.

fn stl(soup: fixtures::Soup) -> Vec<u8> {
    let mut out = Vec::new();
    write_stl_binary(&soup.mesh(), &mut out).expect("in-memory write");
    out
}

/// Runs a session to the end; with `store`, saves and reloads at every pause.
fn session_run(bytes: &[u8], name: &str, decide: bool, store: Option<&SessionStore>) -> Result<String, String> {
    let err = |e: topocam::session::SessionError| e.to_string();
    let mut s = Session::from_stl(name, bytes, SessionConfig::default()).map_err(err)?;
    loop {
        if let Some(store) = store {
            store.save(&s).map_err(err)?;
            s = store.load(name).map_err(err)?;
        }
        match s.advance().map_err(err)? {
            Advance::Finalized => return Ok(final_graph_json(&s.graph)),
            Advance::AwaitingDecision(_) if decide => {
                if let Some(store) = store {
                    store.save(&s).map_err(err)?;
                    s = store.load(name).map_err(err)?;
                }
                let d = fixtures::die_decision(&s.graph, &s.identifier.mesh).ok_or("no scripted decision")?;
                s.decide(DecisionInput::Decomposition(d)).map_err(err)?;
            }
            Advance::AwaitingDecision(q) => return Err(format!("unexpected query {}", q[0].id)),
        }
    }
}

fn criterion_6() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = SessionStore::new(dir.path());
    for (name, bytes, decide) in [("stepped", stl(fixtures::stepped_pocket_scene().soup()), false), ("die", stl(fixtures::die_soup()), true)] {
        let a = session_run(&bytes, name, decide, None)?;
        let b = session_run(&bytes, name, decide, None)?;
        let c = session_run(&bytes, name, decide, Some(&store))?;
        ensure(a == b, || format!("{name}: two straight runs differ"))?;
        ensure(a == c, || format!("{name}: resumed run differs"))?;
    }
    Ok("straight, repeated and resumed runs are byte-identical on both fixtures".into())
}

// 7. Invariants on random scenes.

fn property_profile(g: &TopoGraph) -> (usize, usize) {
    let concave = g.arcs.iter().filter(|a| a.property == RelProperty::Concave).count();
    let convex = g.arcs.iter().filter(|a| a.property == RelProperty::Convex).count();
    (concave, convex)
}

fn macro_profile(g: &TopoGraph) -> (usize, usize) {
    let cavities = g.macros.iter().filter(|m| m.kind == MacroKind::Cavity).count();
    let protrusions = g.macros.iter().filter(|m| m.kind == MacroKind::Protrusion).count();
    (cavities, protrusions)
}

fn scene_invariants(seed: u64) -> Result<(), String> {
    let scene = fixtures::random_scene(seed);
    let id = identifier(&scene);
    let mut g = id.primary_graph();
    let primary = g.clone();
    ensure(g.hidden.is_empty(), || "primary graph starts with hidden arcs".into())?;
    ensure(id.advance(&mut g).map_err(|e| e.to_string())? == Advance::Finalized, || "random scene raised a query".into())?;

    // Partition of the faces.
    let mut owner = vec![0u8; id.mesh.face_count()];
    for f in &g.features {
        for &face in &f.faces {
            owner[face] += 1;
        }
    }
    ensure(owner.iter().all(|&n| n == 1), || "faces not covered exactly once".into())?;

    // Hidden set: every arc restored, arc ids unique.
    ensure(g.hidden.is_empty() && g.stage == Stage::Finalized, || format!("{} arcs still hidden", g.hidden.len()))?;
    let ids: BTreeSet<u32> = g.arcs.iter().map(|a| a.id).collect();
    ensure(ids.len() == g.arcs.len(), || "duplicate arc ids".into())?;

    // Macro kinds agree with their members and internal arcs.
    let assignment = g.assignment();
    for f in g.features.iter().filter(|f| f.kind != FeatureKind::Transition) {
        ensure(assignment.contains_key(&f.id), || format!("{} unassigned", f.id))?;
    }
    for m in &g.macros {
        let has = |k| m.members.iter().any(|f| f.kind == k);
        match m.kind {
            MacroKind::PartingSurface => ensure(m.members.iter().all(|f| f.kind == FeatureKind::Bottom), || format!("{} holds non-bottoms", m.id))?,
            _ => ensure(has(FeatureKind::Bottom) && has(FeatureKind::Flank), || format!("{} lacks a bottom or a flank", m.id))?,
        }
        let want = match m.kind {
            MacroKind::Cavity => RelProperty::Concave,
            MacroKind::Protrusion => RelProperty::Convex,
            MacroKind::PartingSurface => continue,
        };
        for a in g.arcs.iter().filter(|a| a.ends.iter().all(|e| assignment.get(e) == Some(&m.id)) && a.ends.len() == 2) {
            ensure(a.property == want, || format!("{} internal arc {} is {:?}", m.id, a.id, a.property))?;
        }
    }

    // Propagation is a fixpoint.
    let mut again = g.clone();
    propagate_relations(&mut again, 1e-6 * id.mesh.mesh.bounding_box().diagonal()).map_err(|e| e.to_string())?;
    ensure(relation_set(&again) == relation_set(&g) && again.relations.len() == g.relations.len(), || "propagation not idempotent".into())?;

    // Mirroring swaps concave and convex.
    let mid_ = identifier(&scene.mirror());
    let mut mg = mid_.primary_graph();
    let (cc, cv) = property_profile(&primary);
    ensure(property_profile(&mg) == (cv, cc), || format!("mirror arcs {:?} vs {:?}", property_profile(&mg), (cc, cv)))?;
    let mirrored_props: Vec<ShapeProperty> = mg.features.iter().map(|f| f.shape_property.mirrored()).collect();
    let props: Vec<ShapeProperty> = primary.features.iter().map(|f| f.shape_property).collect();
    ensure(sorted(props) == sorted(mirrored_props), || "feature properties do not swap".into())?;
    ensure(mid_.advance(&mut mg).map_err(|e| e.to_string())? == Advance::Finalized, || "mirrored scene raised a query".into())?;
    let (c, p) = macro_profile(&g);
    ensure(macro_profile(&mg) == (p, c), || format!("mirror macros {:?} vs {:?}", macro_profile(&mg), (c, p)))?;
    Ok(())
}

fn sorted(mut v: Vec<ShapeProperty>) -> Vec<String> {
    let mut s: Vec<String> = v.drain(..).map(|p| format!("{p:?}")).collect();
    s.sort();
    s
}

fn criterion_7() -> Check {
    const SCENES: u64 = 50;
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).min(8) as u64;
    let failures: Vec<String> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || {
                    (0..SCENES).filter(|seed| seed % threads == t).filter_map(|seed| scene_invariants(seed).err().map(|e| format!("seed {seed}: {e}"))).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("scene thread")).collect()
    });
    ensure(failures.is_empty(), || format!("{} of {SCENES} scenes failed, first: {}", failures.len(), failures[0]))?;
    Ok(format!("{SCENES} scenes and their mirrors hold every invariant"))
}

fn main() {
    let die = die_identifier();
    let criteria: Vec<Criterion> = vec![
        ("material-angle oracle on random dihedrals", Box::new(criterion_1)),
        ("pocket with short and tall boss", Box::new(criterion_2)),
        ("forging die identification", Box::new(|| criterion_3(&die))),
        ("forging die primary graph counts", Box::new(|| criterion_4(&die))),
        ("curvature accuracy", Box::new(criterion_5)),
        ("determinism and resume", Box::new(criterion_6)),
        ("invariants on random scenes", Box::new(criterion_7)),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let t = start.elapsed();
        match outcome {
            Ok(msg) => println!("criterion {}: PASS  {name}: {msg} [{t:.2?}]", n + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {msg} [{t:.2?}]", n + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
