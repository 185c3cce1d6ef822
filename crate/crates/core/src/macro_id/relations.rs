use std::collections::{BTreeMap, BTreeSet};

use crate::adjacency::AdjacencyRelation;
use crate::mesh::{HalfEdgeMesh, Point, Vector};
use crate::segmentation::{boundary_loops, FeatureId, FeatureKind, MachiningSetup};

use super::engine::Identifier;
use super::{IdentifyError, MacroFeature, MacroId, MacroKind, RelationKind, RelationOverride, Stage, StepEvent, TopoGraph, TopoRelation};

/// Heights of a macro along the tool axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroLevels {
    pub top: f64,
    pub bottom: f64,
    pub opening: f64,
    pub height: f64,
}

impl MacroLevels {
    pub fn store(&self, m: &mut MacroFeature) {
        m.top_level = self.top;
        m.bottom_level = self.bottom;
        m.opening_level = self.opening;
        m.height = self.height;
    }
}

fn member_faces(g: &TopoGraph, members: &[FeatureId]) -> Vec<usize> {
    let mut faces: Vec<usize> = members.iter().filter_map(|m| g.feature(m)).flat_map(|f| f.faces.iter().copied()).collect();
    faces.sort_unstable();
    faces.dedup();
    faces
}

fn face_vertices(mesh: &HalfEdgeMesh, faces: &[usize]) -> Vec<u32> {
    let mut v: Vec<u32> = faces.iter().flat_map(|&f| mesh.mesh.faces[f]).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Outer boundary loops of a face set as vertex lists.
fn outline(mesh: &HalfEdgeMesh, faces: &[usize]) -> Vec<Vec<u32>> {
    boundary_loops(faces, mesh, |_| None).iter().map(|c| c.vertices(mesh)).collect()
}

/// Arcs touching the macro that are neither internal nor bounding-box arcs.
fn external_arcs<'g>(g: &'g TopoGraph, members: &'g [FeatureId]) -> impl Iterator<Item = &'g AdjacencyRelation> + 'g {
    let assignment = g.assignment();
    g.arcs.iter().filter(move |a| {
        !a.to_bounding_box
            && members.iter().any(|m| a.links(m) || a.transition.as_ref() == Some(m))
            && !g.is_internal(a, &assignment)
    })
}

/// Levels of a macro. The interface with the rest of the part is the
/// boundary of its faces plus the transitions of its external arcs.
pub fn macro_levels(mesh: &HalfEdgeMesh, g: &TopoGraph, id: MacroId) -> MacroLevels {
    let Some(m) = g.macro_by_id(id) else { return MacroLevels { top: 0.0, bottom: 0.0, opening: 0.0, height: 0.0 } };
    let setup = &g.setup;
    let faces = member_faces(g, &m.members);
    let level = |v: &u32| setup.level(&mesh.position(*v));
    let all = face_vertices(mesh, &faces);
    let top = all.iter().map(level).fold(f64::NEG_INFINITY, f64::max);
    let bottom = all.iter().map(level).fold(f64::INFINITY, f64::min);
    let mut interface: Vec<u32> = outline(mesh, &faces).into_iter().flatten().collect();
    let transitions: Vec<FeatureId> = external_arcs(g, &m.members)
        .filter_map(|a| a.transition.clone())
        .filter(|t| m.members.binary_search(t).is_err())
        .collect();
    interface.extend(face_vertices(mesh, &member_faces(g, &transitions)));
    let (lo, hi) = interface
        .iter()
        .map(level)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z), hi.max(z)));
    let (opening, height) = match m.kind {
        MacroKind::Cavity if hi.is_finite() => (hi, hi - bottom),
        MacroKind::Protrusion if lo.is_finite() => (lo, top - lo),
        MacroKind::PartingSurface => (top, 0.0),
        _ => (top, 0.0),
    };
    MacroLevels { top, bottom, opening, height }
}

/// Height of a macro as stored after finalization.
pub fn macro_height(m: &MacroFeature) -> f64 {
    m.height
}

fn plane_basis(axis: &Vector) -> (Vector, Vector) {
    let helper = if axis.x.abs() < 0.9 { Vector::x() } else { Vector::y() };
    let u = axis.cross(&helper).normalize();
    (u, axis.cross(&u))
}

fn project(p: &Point, basis: &(Vector, Vector)) -> (f64, f64) {
    (p.coords.dot(&basis.0), p.coords.dot(&basis.1))
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].0 * poly[(i + 1) % n].1 - poly[(i + 1) % n].0 * poly[i].1).sum::<f64>() / 2.0
}

fn inside(poly: &[(f64, f64)], q: (f64, f64)) -> bool {
    let mut c = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if (a.1 > q.1) != (b.1 > q.1) && q.0 < (b.0 - a.0) * (q.1 - a.1) / (b.1 - a.1) + a.0 {
            c = !c;
        }
    }
    c
}

/// The protrusion's base outline and its centroid lie inside the projected
/// outer loop of the cavity.
fn contained(g: &TopoGraph, mesh: &HalfEdgeMesh, setup: &MachiningSetup, protrusion: &MacroFeature, cavity: &MacroFeature) -> bool {
    let basis = plane_basis(&setup.tool_axis);
    let outer = outline(mesh, &member_faces(g, &cavity.members))
        .into_iter()
        .map(|l| l.iter().map(|&v| project(&mesh.position(v), &basis)).collect::<Vec<_>>())
        .max_by(|a, b| polygon_area(a).abs().total_cmp(&polygon_area(b).abs()));
    let Some(outer) = outer else { return false };
    let base: Vec<(f64, f64)> = outline(mesh, &member_faces(g, &protrusion.members))
        .into_iter()
        .flatten()
        .map(|v| project(&mesh.position(v), &basis))
        .collect();
    if base.is_empty() {
        return false;
    }
    let n = base.len() as f64;
    let centroid = (base.iter().map(|p| p.0).sum::<f64>() / n, base.iter().map(|p| p.1).sum::<f64>() / n);
    inside(&outer, centroid) && base.iter().all(|&p| inside(&outer, p))
}

fn relation(kind: RelationKind, from: MacroId, to: MacroId, arc: u32) -> TopoRelation {
    TopoRelation {
        kind,
        from,
        to,
        via: vec![arc],
        propagated: false,
        overridden: false,
        super_protrusion: kind == RelationKind::OpensOnto
            && from.kind == MacroKind::Protrusion
            && to.kind == MacroKind::Protrusion,
    }
}

/// Relations implied by one restored arc between two macros. Heights must
/// already be stored on the macros.
pub fn classify_macro_relation(g: &TopoGraph, mesh: &HalfEdgeMesh, arc: &AdjacencyRelation, tol: f64) -> Vec<TopoRelation> {
    let [a, b] = arc.ends.as_slice() else { return Vec::new() };
    let (Some(ma), Some(mb)) = (g.macro_of(a), g.macro_of(b)) else { return Vec::new() };
    if ma == mb {
        return Vec::new();
    }
    let (Some(ma_f), Some(mb_f)) = (g.macro_by_id(ma), g.macro_by_id(mb)) else { return Vec::new() };

    let pair = match (ma.kind, mb.kind) {
        (MacroKind::Protrusion, MacroKind::Cavity) => Some((ma_f, mb_f)),
        (MacroKind::Cavity, MacroKind::Protrusion) => Some((mb_f, ma_f)),
        _ => None,
    };
    if let Some((p, c)) = pair {
        if contained(g, mesh, &g.setup, p, c) {
            let kind = if p.height > c.height + tol {
                RelationKind::Oversteps
            } else {
                if (p.height - c.height).abs() <= tol {
                    log::warn!("{} and {} have equal heights; taken as belonging", p.id, c.id);
                }
                RelationKind::BelongsTo
            };
            return vec![relation(kind, p.id, c.id, arc.id)];
        }
    }

    let bearing = |bottom: &FeatureId, other: &FeatureId| -> bool {
        let Some(f) = g.feature(bottom) else { return false };
        let key = arc.transition.as_ref().unwrap_or(other);
        let mut chains = f.chains_with(key).peekable();
        chains.peek().is_some() && chains.all(|c| c.closed)
    };
    match (a.kind == FeatureKind::Bottom, b.kind == FeatureKind::Bottom) {
        (true, false) | (false, true) => {
            let (bottom, other, mbot, moth) = if a.kind == FeatureKind::Bottom { (a, b, ma, mb) } else { (b, a, mb, ma) };
            if bearing(bottom, other) {
                vec![relation(RelationKind::SuperposedOn, mbot, moth, arc.id)]
            } else {
                vec![relation(RelationKind::OpensOnto, moth, mbot, arc.id)]
            }
        }
        _ => vec![relation(RelationKind::OpensOnto, ma, mb, arc.id), relation(RelationKind::OpensOnto, mb, ma, arc.id)],
    }
}

fn superposition_cycle(relations: &[TopoRelation]) -> Option<Vec<MacroId>> {
    let mut next: BTreeMap<MacroId, Vec<MacroId>> = BTreeMap::new();
    for r in relations.iter().filter(|r| r.kind == RelationKind::SuperposedOn) {
        next.entry(r.from).or_default().push(r.to);
    }
    fn visit(
        n: MacroId,
        next: &BTreeMap<MacroId, Vec<MacroId>>,
        state: &mut BTreeMap<MacroId, u8>,
        stack: &mut Vec<MacroId>,
    ) -> Option<Vec<MacroId>> {
        match state.get(&n) {
            Some(1) => {
                let at = stack.iter().position(|&s| s == n).unwrap_or(0);
                return Some(stack[at..].to_vec());
            }
            Some(_) => return None,
            None => {}
        }
        state.insert(n, 1);
        stack.push(n);
        for &m in next.get(&n).into_iter().flatten() {
            if let Some(c) = visit(m, next, state, stack) {
                return Some(c);
            }
        }
        stack.pop();
        state.insert(n, 2);
        None
    }
    let mut state = BTreeMap::new();
    let starts: Vec<MacroId> = next.keys().copied().collect();
    for s in starts {
        if let Some(c) = visit(s, &next, &mut state, &mut Vec::new()) {
            return Some(c);
        }
    }
    None
}

/// Carries overstepping protrusions up the superposition chain: a protrusion
/// overstepping `C` is compared with every macro superposed on `C`.
pub fn propagate_relations(g: &mut TopoGraph, tol: f64) -> Result<(), IdentifyError> {
    g.relations.retain(|r| !r.propagated || r.overridden);
    if let Some(c) = superposition_cycle(&g.relations) {
        return Err(IdentifyError::SuperpositionCycle(c));
    }
    loop {
        let mut added = Vec::new();
        for o in g.relations.iter().filter(|r| r.kind == RelationKind::Oversteps) {
            let Some(p) = g.macro_by_id(o.from) else { continue };
            for s in g.relations.iter().filter(|r| r.kind == RelationKind::SuperposedOn && r.to == o.to && r.from != o.from) {
                let Some(u) = g.macro_by_id(s.from) else { continue };
                let known = g.relations.iter().chain(added.iter()).any(|r: &TopoRelation| r.from == p.id && r.to == u.id);
                if known {
                    continue;
                }
                let kind = if p.top_level > u.opening_level + tol { RelationKind::Oversteps } else { RelationKind::BelongsTo };
                let mut via = o.via.clone();
                via.extend(&s.via);
                via.sort_unstable();
                via.dedup();
                added.push(TopoRelation {
                    kind,
                    from: p.id,
                    to: u.id,
                    via,
                    propagated: true,
                    overridden: false,
                    super_protrusion: false,
                });
            }
        }
        if added.is_empty() {
            return Ok(());
        }
        g.relations.extend(added);
    }
}

/// Step 5: restores hidden arcs, measures every macro and derives relations.
pub(super) fn finalize(id: &Identifier, g: &mut TopoGraph) -> Result<(), IdentifyError> {
    let tol = 1e-6 * id.mesh.mesh.bounding_box().diagonal();
    let assignment = g.assignment();
    let orphans: Vec<FeatureId> = g
        .features
        .iter()
        .filter(|f| f.kind != FeatureKind::Transition && !assignment.contains_key(&f.id))
        .map(|f| f.id.clone())
        .collect();
    if !orphans.is_empty() {
        return Err(IdentifyError::Orphans(orphans));
    }
    let restored = g.hidden.len();
    g.hidden.clear();
    let ids: Vec<MacroId> = g.macros.iter().map(|m| m.id).collect();
    for m in &ids {
        let levels = macro_levels(&id.mesh, g, *m);
        if m.kind != MacroKind::PartingSurface && levels.height <= tol {
            return Err(IdentifyError::FlatMacro(*m, levels.height));
        }
        if let Some(mf) = g.macros.iter_mut().find(|x| x.id == *m) {
            levels.store(mf);
        }
    }
    let mut merged: BTreeMap<(MacroId, MacroId, RelationKind), TopoRelation> = BTreeMap::new();
    let mut arcs: Vec<&AdjacencyRelation> = g.arcs.iter().filter(|a| !a.to_bounding_box && !g.is_internal(a, &assignment)).collect();
    arcs.sort_by_key(|a| a.id);
    for arc in arcs {
        for r in classify_macro_relation(g, &id.mesh, arc, tol) {
            merged
                .entry((r.from, r.to, r.kind))
                .and_modify(|e| {
                    e.via.extend(&r.via);
                    e.via.sort_unstable();
                    e.via.dedup();
                })
                .or_insert(r);
        }
    }
    g.relations = merged.into_values().collect();
    propagate_relations(g, tol)?;
    let unique: BTreeSet<(MacroId, MacroId)> = g.relations.iter().map(|r| (r.from, r.to)).collect();
    g.events.push(StepEvent {
        step: 5,
        round: g.rounds,
        iteration: 0,
        macro_id: None,
        message: format!("{restored} arc(s) restored, {} relation(s) over {} pair(s)", g.relations.len(), unique.len()),
    });
    Ok(())
}

/// Replaces or removes the relation(s) from one macro to another.
pub(super) fn apply_override(id: &Identifier, g: &mut TopoGraph, o: &RelationOverride) -> Result<(), IdentifyError> {
    if g.stage != Stage::Finalized {
        return Err(IdentifyError::NotFinalized);
    }
    for m in [o.from, o.to] {
        if g.macro_by_id(m).is_none() {
            return Err(IdentifyError::UnknownMacro(m));
        }
    }
    let mut via: Vec<u32> = g.relations.iter().filter(|r| r.from == o.from && r.to == o.to).flat_map(|r| r.via.clone()).collect();
    via.sort_unstable();
    via.dedup();
    g.relations.retain(|r| !(r.from == o.from && r.to == o.to));
    if let Some(kind) = o.kind {
        let mut r = relation(kind, o.from, o.to, 0);
        r.via = via;
        r.overridden = true;
        g.relations.push(r);
    }
    propagate_relations(g, 1e-6 * id.mesh.mesh.bounding_box().diagonal())?;
    g.events.push(StepEvent {
        step: 5,
        round: g.rounds,
        iteration: 0,
        macro_id: Some(o.from),
        message: match o.kind {
            Some(k) => format!("override {} -> {}: {k:?}", o.from, o.to),
            None => format!("override {} -> {}: removed", o.from, o.to),
        },
    });
    Ok(())
}
