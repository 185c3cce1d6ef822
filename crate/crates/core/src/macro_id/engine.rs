use std::collections::BTreeSet;

use crate::adjacency::{build_primary_arcs, resolve_property, AdjacencyRelation, GraphOptions, RelProperty};
use crate::curvature::{vertex_curvatures, CurvatureThresholds, Curvatures};
use crate::mesh::HalfEdgeMesh;
use crate::segmentation::{segment_with, FeatureId, FeatureKind, MachiningSetup, Segmentation, DEFAULT_MIN_FEATURE_FACES};

use super::relations::{finalize, macro_levels};
use super::{
    DecisionInput, DecompositionQuery, IdentifyError, MacroFeature, MacroId, MacroKind, Stage, StepEvent, TopoGraph,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifyOptions {
    pub graph: GraphOptions,
    pub min_feature_faces: usize,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions { graph: GraphOptions::default(), min_feature_faces: DEFAULT_MIN_FEATURE_FACES }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Advance {
    AwaitingDecision(Vec<DecompositionQuery>),
    Finalized,
}

/// Mesh-bound context for segmentation and identification. The graph itself
/// is plain data so it can be persisted between calls.
#[derive(Debug, Clone)]
pub struct Identifier {
    pub mesh: HalfEdgeMesh,
    pub setup: MachiningSetup,
    pub curvatures: Curvatures,
    pub thresholds: CurvatureThresholds,
    pub options: IdentifyOptions,
}

impl Identifier {
    pub fn new(mesh: HalfEdgeMesh, setup: MachiningSetup, options: IdentifyOptions) -> Self {
        let curvatures = vertex_curvatures(&mesh);
        let thresholds = CurvatureThresholds::for_diagonal(mesh.mesh.bounding_box().diagonal());
        Identifier { mesh, setup, curvatures, thresholds, options }
    }

    pub fn segment(&self) -> Segmentation {
        segment_with(&self.mesh, &self.setup, &self.curvatures, self.thresholds, self.options.min_feature_faces)
    }

    pub fn primary_graph(&self) -> TopoGraph {
        let mut features = self.segment().features;
        let arcs = build_primary_arcs(&mut features, &self.mesh, &self.setup, &self.curvatures, self.thresholds, self.options.graph);
        TopoGraph::new(self.setup, features, arcs)
    }

    fn tolerance(&self) -> f64 {
        1e-6 * self.mesh.mesh.bounding_box().diagonal()
    }

    /// Runs the identification until it needs a decision or is complete.
    pub fn advance(&self, g: &mut TopoGraph) -> Result<Advance, IdentifyError> {
        match g.stage {
            Stage::Finalized => return Ok(Advance::Finalized),
            Stage::AwaitingDecision if !g.queries.is_empty() => return Ok(Advance::AwaitingDecision(g.queries.clone())),
            Stage::Primary => {
                self.step1(g);
                g.stage = Stage::Identifying;
            }
            _ => {}
        }
        loop {
            self.step2(g);
            if self.step3(g) == 0 {
                break;
            }
        }
        let queries = step4_queries(g);
        if !queries.is_empty() {
            for q in &queries {
                g.events.push(StepEvent {
                    step: 4,
                    round: g.rounds,
                    iteration: 0,
                    macro_id: None,
                    message: format!("{} on {} linking {}", q.id, q.transition, names(&q.linked)),
                });
            }
            g.queries = queries.clone();
            g.stage = Stage::AwaitingDecision;
            return Ok(Advance::AwaitingDecision(queries));
        }
        finalize(self, g)?;
        g.stage = Stage::Finalized;
        Ok(Advance::Finalized)
    }

    /// Applies a decomposition decision or a relation override.
    pub fn apply(&self, g: &mut TopoGraph, input: &DecisionInput) -> Result<(), IdentifyError> {
        match input {
            DecisionInput::Decomposition(d) => super::decision::apply_decision(self, g, d),
            DecisionInput::Override(o) => super::relations::apply_override(self, g, o),
        }
    }

    /// Alternates `advance` with decisions from `source` until finalized.
    pub fn run(&self, g: &mut TopoGraph, source: impl IntoIterator<Item = DecisionInput>) -> Result<(), IdentifyError> {
        let mut source = source.into_iter();
        loop {
            match self.advance(g)? {
                Advance::Finalized => break,
                Advance::AwaitingDecision(q) => match source.next() {
                    Some(d) => self.apply(g, &d)?,
                    None => return Err(IdentifyError::PendingQueries(q.len())),
                },
            }
        }
        // Overrides left over once the graph is final.
        for d in source {
            self.apply(g, &d)?;
        }
        Ok(())
    }

    fn step1(&self, g: &mut TopoGraph) {
        let members = self.parting_candidates(g);
        if members.is_empty() {
            log::warn!("no feature reaches the part boundary; no parting surface");
            g.events.push(StepEvent { step: 1, round: 0, iteration: 0, macro_id: None, message: "no parting surface".into() });
            return;
        }
        let id = MacroId { kind: MacroKind::PartingSurface, number: 1 };
        self.add_macro(g, MacroKind::PartingSurface, members.clone(), 1, 0);
        let arcs = std::mem::take(&mut g.arcs);
        g.arcs = self.fan_out_parting(g, arcs);
        for m in &members {
            let arc = g.next_arc;
            g.next_arc += 1;
            g.arcs.push(AdjacencyRelation {
                id: arc,
                transition: None,
                ends: vec![m.clone()],
                property: RelProperty::Unspecified,
                closed: false,
                complex: false,
                resolved: false,
                to_bounding_box: true,
            });
        }
        let hide: Vec<u32> = g.arcs.iter().filter(|a| !a.to_bounding_box && members.iter().any(|m| a.links(m))).map(|a| a.id).collect();
        for a in &hide {
            g.hide(*a);
        }
        g.events.push(StepEvent {
            step: 1,
            round: 0,
            iteration: 0,
            macro_id: Some(id),
            message: format!("{} hidden arc(s)", hide.len()),
        });
    }

    /// Bottoms on the open mesh boundary or against a lateral face of the
    /// bounding box.
    fn parting_candidates(&self, g: &TopoGraph) -> Vec<FeatureId> {
        let bb = self.mesh.mesh.bounding_box();
        let tol = self.tolerance();
        let axis = g.setup.tool_axis;
        let lateral: Vec<usize> = (0..3).filter(|&i| axis[i].abs() < 0.5).collect();
        g.features
            .iter()
            .filter(|f| f.kind == FeatureKind::Bottom)
            .filter(|f| {
                f.touches_mesh_boundary()
                    || f.faces.iter().any(|&face| {
                        self.mesh.mesh.faces[face].iter().any(|&v| {
                            let p = self.mesh.position(v);
                            lateral.iter().any(|&i| (p[i] - bb.min[i]).abs() <= tol || (p[i] - bb.max[i]).abs() <= tol)
                        })
                    })
            })
            .map(|f| f.id.clone())
            .collect()
    }

    /// Replaces complex arcs touching the parting surface with one arc per
    /// (parting feature, other feature) pair.
    pub(super) fn fan_out_parting(&self, g: &mut TopoGraph, arcs: Vec<AdjacencyRelation>) -> Vec<AdjacencyRelation> {
        let Some(parting) = g.parting().map(|m| m.members.clone()) else { return arcs };
        let mut out = Vec::with_capacity(arcs.len());
        for arc in arcs {
            let anchor = arc.ends.iter().find(|e| parting.binary_search(e).is_ok()).cloned();
            let Some(anchor) = anchor.filter(|_| arc.complex) else {
                out.push(arc);
                continue;
            };
            for other in arc.ends.iter().filter(|e| parting.binary_search(e).is_err()) {
                let mut ends = vec![anchor.clone(), other.clone()];
                ends.sort();
                let mut pair = AdjacencyRelation {
                    id: g.next_arc,
                    transition: arc.transition.clone(),
                    ends,
                    property: RelProperty::Unspecified,
                    closed: false,
                    complex: false,
                    resolved: false,
                    to_bounding_box: false,
                };
                g.next_arc += 1;
                if let Some(t) = pair.transition.as_ref().and_then(|t| g.feature(t)) {
                    pair.closed = pair.ends.iter().all(|e| t.chains_with(e).all(|c| c.closed));
                }
                let test = resolve_property(&pair, &g.features, &self.mesh, &self.setup, self.options.graph.samples);
                if let Some(p) = test.property() {
                    pair.property = p;
                    pair.resolved = true;
                }
                out.push(pair);
            }
        }
        out
    }

    /// Creates a macro, hides its external arcs and records the event.
    pub(super) fn add_macro(&self, g: &mut TopoGraph, kind: MacroKind, mut members: Vec<FeatureId>, step: u8, iteration: u32) -> MacroId {
        members.sort();
        members.dedup();
        let number = g.macros.iter().filter(|m| m.kind == kind).count() as u32 + 1;
        let id = MacroId { kind, number };
        g.macros.push(MacroFeature {
            id,
            kind,
            members,
            height: 0.0,
            opening_level: 0.0,
            top_level: 0.0,
            bottom_level: 0.0,
            step,
            round: g.rounds,
            iteration,
        });
        let levels = macro_levels(&self.mesh, g, id);
        if let Some(m) = g.macros.last_mut() {
            levels.store(m);
        }
        if kind != MacroKind::PartingSurface {
            let assignment = g.assignment();
            let members = &g.macros.last().map(|m| m.members.clone()).unwrap_or_default();
            let external: Vec<u32> = g
                .arcs
                .iter()
                .filter(|a| members.iter().any(|m| a.links(m) || a.transition.as_ref() == Some(m)))
                .filter(|a| !g.is_internal(a, &assignment))
                .map(|a| a.id)
                .collect();
            for a in external {
                g.hide(a);
            }
        }
        let names = g.macros.last().map(|m| names(&m.members)).unwrap_or_default();
        log::info!("step {step}: {id} = {{{names}}}");
        g.events.push(StepEvent { step, round: g.rounds, iteration, macro_id: Some(id), message: names });
        id
    }

    /// Visible arcs of a bottom that count towards steps 2 and 3.
    fn counted_arcs<'g>(g: &'g TopoGraph, bottom: &FeatureId) -> Vec<&'g AdjacencyRelation> {
        g.visible_arcs()
            .filter(|a| !a.to_bounding_box && a.links(bottom))
            .filter(|a| a.complex || !a.ends.iter().all(|e| e.kind == FeatureKind::Bottom))
            .collect()
    }

    fn step2(&self, g: &mut TopoGraph) -> usize {
        let mut created = 0;
        let mut iteration = g.events.iter().filter(|e| e.step == 2 && e.round == g.rounds).map(|e| e.iteration).max().unwrap_or(0);
        loop {
            let assignment = g.assignment();
            let mut found = Vec::new();
            for b in g.features.iter().filter(|f| f.kind == FeatureKind::Bottom && !assignment.contains_key(&f.id)) {
                let arcs = Self::counted_arcs(g, &b.id);
                let [arc] = arcs.as_slice() else { continue };
                if arc.complex {
                    continue;
                }
                let Some(flank) = arc.other(&b.id).filter(|o| o.kind == FeatureKind::Flank && !assignment.contains_key(*o)) else {
                    continue;
                };
                let kind = match arc.property {
                    RelProperty::Concave => MacroKind::Cavity,
                    RelProperty::Convex => MacroKind::Protrusion,
                    RelProperty::Unspecified => {
                        log::warn!("{} has a single unresolved arc; left for the assistant", b.id);
                        continue;
                    }
                };
                let mut members = vec![b.id.clone(), flank.clone()];
                members.extend(arc.transition.iter().cloned());
                found.push((kind, members));
            }
            if found.is_empty() {
                return created;
            }
            iteration += 1;
            for (kind, members) in found {
                let assignment = g.assignment();
                if members.iter().any(|m| assignment.contains_key(m)) {
                    continue;
                }
                self.add_macro(g, kind, members, 2, iteration);
                created += 1;
            }
        }
    }

    fn step3(&self, g: &mut TopoGraph) -> usize {
        let mut created = 0;
        let bottoms: Vec<FeatureId> = g.features.iter().filter(|f| f.kind == FeatureKind::Bottom).map(|f| f.id.clone()).collect();
        for b in bottoms {
            let assignment = g.assignment();
            if assignment.contains_key(&b) {
                continue;
            }
            let arcs = Self::counted_arcs(g, &b);
            if arcs.len() < 2 || arcs.iter().any(|a| a.complex || a.ends.len() != 2) {
                continue;
            }
            let flanks: BTreeSet<&FeatureId> = arcs.iter().filter_map(|a| a.other(&b)).collect();
            let props: BTreeSet<_> = arcs.iter().map(|a| format!("{:?}", a.property)).collect();
            if flanks.len() != arcs.len()
                || flanks.iter().any(|f| f.kind != FeatureKind::Flank || assignment.contains_key(*f))
                || props.len() != 1
            {
                if props.len() > 1 {
                    log::warn!("{b} links flanks with mixed properties; left for the assistant");
                }
                continue;
            }
            let kind = match arcs[0].property {
                RelProperty::Concave => MacroKind::Cavity,
                RelProperty::Convex => MacroKind::Protrusion,
                RelProperty::Unspecified => continue,
            };
            let mut members: Vec<FeatureId> = vec![b.clone()];
            members.extend(flanks.into_iter().cloned());
            members.extend(arcs.iter().filter_map(|a| a.transition.clone()));
            self.add_macro(g, kind, members, 3, 0);
            created += 1;
        }
        created
    }
}

/// One query per visible complex arc, by transition id.
fn step4_queries(g: &TopoGraph) -> Vec<DecompositionQuery> {
    let assignment = g.assignment();
    let mut queries: Vec<DecompositionQuery> = g
        .visible_arcs()
        .filter(|a| a.complex)
        .filter_map(|a| {
            let t = a.transition.clone()?;
            Some(DecompositionQuery {
                id: format!("query-{t}"),
                suggested_fields: a.ends.iter().filter(|e| e.kind == FeatureKind::Bottom && !assignment.contains_key(*e)).cloned().collect(),
                linked: a.ends.clone(),
                transition: t,
            })
        })
        .collect();
    queries.sort_by(|a, b| a.transition.cmp(&b.transition));
    queries
}

fn names(ids: &[FeatureId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}
