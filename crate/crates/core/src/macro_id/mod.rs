//! Macro-feature identification: parting surface, cavities, protrusions and
//! the topological relations between them.

mod decision;
mod engine;
mod relations;

pub use decision::{DecisionError, FaceIssue, FaceProblem};
pub use engine::{Advance, Identifier, IdentifyOptions};
pub use relations::{classify_macro_relation, macro_height, macro_levels, propagate_relations, MacroLevels};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::adjacency::{find_feature, AdjacencyRelation};
use crate::segmentation::{FeatureId, GeomFeature, MachiningSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MacroKind {
    Cavity,
    Protrusion,
    PartingSurface,
}

impl MacroKind {
    fn name(self) -> &'static str {
        match self {
            MacroKind::Cavity => "cavity",
            MacroKind::Protrusion => "protrusion",
            MacroKind::PartingSurface => "parting-surface",
        }
    }
}

/// `cavity-2`, `protrusion-1`, `parting-surface-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacroId {
    pub kind: MacroKind,
    pub number: u32,
}

impl fmt::Display for MacroId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind.name(), self.number)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid macro id '{0}'")]
pub struct ParseMacroIdError(pub String);

impl FromStr for MacroId {
    type Err = ParseMacroIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMacroIdError(s.to_string());
        let (kind, number) = s.rsplit_once('-').ok_or_else(err)?;
        let kind = match kind {
            "cavity" => MacroKind::Cavity,
            "protrusion" => MacroKind::Protrusion,
            "parting-surface" => MacroKind::PartingSurface,
            _ => return Err(err()),
        };
        Ok(MacroId { kind, number: number.parse().map_err(|_| err())? })
    }
}

impl Serialize for MacroId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacroId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroFeature {
    pub id: MacroId,
    pub kind: MacroKind,
    /// Sorted.
    pub members: Vec<FeatureId>,
    pub height: f64,
    /// Top of the external boundary for cavities and the parting surface,
    /// base of the external boundary for protrusions.
    pub opening_level: f64,
    pub top_level: f64,
    pub bottom_level: f64,
    /// Identification step (1 to 3) that created the macro.
    pub step: u8,
    /// Number of decisions applied before the macro was found.
    pub round: u32,
    /// Step-2 iteration within the round; 0 for other steps.
    pub iteration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    SuperposedOn,
    OpensOnto,
    BelongsTo,
    Oversteps,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopoRelation {
    pub kind: RelationKind,
    pub from: MacroId,
    pub to: MacroId,
    /// Restored arcs the relation was derived from.
    pub via: Vec<u32>,
    pub propagated: bool,
    #[serde(default)]
    pub overridden: bool,
    /// Two protrusions opening onto each other.
    #[serde(default)]
    pub super_protrusion: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionQuery {
    pub id: String,
    pub transition: FeatureId,
    pub linked: Vec<FeatureId>,
    pub suggested_fields: Vec<FeatureId>,
}

/// Answer to a query. Each partition lists the parts of one feature as face
/// lists; part `i` becomes the sub-feature `<parent>.<i+1>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionDecision {
    pub query: String,
    #[serde(default)]
    pub feature_splits: BTreeMap<FeatureId, Vec<Vec<usize>>>,
    #[serde(default)]
    pub transition_splits: BTreeMap<FeatureId, Vec<Vec<usize>>>,
}

/// Replaces the proposed relation between two macros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationOverride {
    pub from: MacroId,
    pub to: MacroId,
    /// `None` removes the relation.
    pub kind: Option<RelationKind>,
}

/// Anything accepted on the decision channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecisionInput {
    Decomposition(DecompositionDecision),
    Override(RelationOverride),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvent {
    pub step: u8,
    pub round: u32,
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_id: Option<MacroId>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Primary,
    Identifying,
    AwaitingDecision,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetiredFeature {
    pub id: FeatureId,
    pub children: Vec<FeatureId>,
}

/// Features, adjacency arcs and everything built on top of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoGraph {
    pub setup: MachiningSetup,
    /// Sorted by id.
    pub features: Vec<GeomFeature>,
    pub retired: Vec<RetiredFeature>,
    pub arcs: Vec<AdjacencyRelation>,
    pub hidden: BTreeSet<u32>,
    pub macros: Vec<MacroFeature>,
    pub relations: Vec<TopoRelation>,
    pub queries: Vec<DecompositionQuery>,
    pub events: Vec<StepEvent>,
    pub stage: Stage,
    pub rounds: u32,
    pub next_arc: u32,
}

impl TopoGraph {
    pub fn new(setup: MachiningSetup, features: Vec<GeomFeature>, arcs: Vec<AdjacencyRelation>) -> Self {
        let next_arc = arcs.iter().map(|a| a.id + 1).max().unwrap_or(0);
        TopoGraph {
            setup,
            features,
            retired: Vec::new(),
            arcs,
            hidden: BTreeSet::new(),
            macros: Vec::new(),
            relations: Vec::new(),
            queries: Vec::new(),
            events: Vec::new(),
            stage: Stage::Primary,
            rounds: 0,
            next_arc,
        }
    }

    pub fn feature(&self, id: &FeatureId) -> Option<&GeomFeature> {
        find_feature(&self.features, id)
    }

    pub fn arc(&self, id: u32) -> Option<&AdjacencyRelation> {
        self.arcs.iter().find(|a| a.id == id)
    }

    pub fn visible_arcs(&self) -> impl Iterator<Item = &AdjacencyRelation> {
        self.arcs.iter().filter(|a| !self.hidden.contains(&a.id))
    }

    pub fn macro_of(&self, feature: &FeatureId) -> Option<MacroId> {
        self.macros.iter().find(|m| m.members.binary_search(feature).is_ok()).map(|m| m.id)
    }

    pub fn macro_by_id(&self, id: MacroId) -> Option<&MacroFeature> {
        self.macros.iter().find(|m| m.id == id)
    }

    /// Feature → owning macro for every assigned feature.
    pub fn assignment(&self) -> BTreeMap<FeatureId, MacroId> {
        self.macros.iter().flat_map(|m| m.members.iter().map(move |f| (f.clone(), m.id))).collect()
    }

    pub fn parting(&self) -> Option<&MacroFeature> {
        self.macros.iter().find(|m| m.kind == MacroKind::PartingSurface)
    }

    /// Arcs whose transition (if any) and ends all sit in one macro.
    pub fn is_internal(&self, arc: &AdjacencyRelation, assignment: &BTreeMap<FeatureId, MacroId>) -> bool {
        if arc.to_bounding_box {
            return false;
        }
        let mut owners = arc.ends.iter().chain(arc.transition.iter()).map(|f| assignment.get(f));
        let first = owners.next().flatten();
        first.is_some() && owners.all(|o| o == first)
    }

    pub fn hide(&mut self, arc: u32) -> bool {
        self.arcs.iter().any(|a| a.id == arc) && self.hidden.insert(arc)
    }

    pub fn restore(&mut self, arc: u32) -> bool {
        self.hidden.remove(&arc)
    }

    pub fn pending_query(&self, id: &str) -> Option<&DecompositionQuery> {
        self.queries.iter().find(|q| q.id == id)
    }

    /// Relation between two macros, ignoring direction for the mutual kind.
    pub fn relations_between(&self, a: MacroId, b: MacroId) -> impl Iterator<Item = &TopoRelation> {
        self.relations.iter().filter(move |r| r.from == a && r.to == b)
    }
}

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error("features left outside every macro: {}", join(.0))]
    Orphans(Vec<FeatureId>),
    #[error("superposition cycle through {}", join(.0))]
    SuperpositionCycle(Vec<MacroId>),
    #[error("macro {0} has non-positive height {1}")]
    FlatMacro(MacroId, f64),
    #[error("relation override needs a finalized graph")]
    NotFinalized,
    #[error("no macro named {0}")]
    UnknownMacro(MacroId),
    #[error("decision source ran out with {0} pending quer(y/ies)")]
    PendingQueries(usize),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mesh::weld_and_connect;
    use crate::segmentation::FeatureKind;

    fn identifier(scene: &fixtures::Scene) -> Identifier {
        let mesh = weld_and_connect(&scene.soup().mesh(), 1e-7).unwrap();
        Identifier::new(mesh, MachiningSetup::default(), IdentifyOptions::default())
    }

    fn ids(s: &str) -> MacroId {
        s.parse().unwrap()
    }

    fn has(g: &TopoGraph, kind: RelationKind, from: &str, to: &str) -> bool {
        g.relations.iter().any(|r| r.kind == kind && r.from == ids(from) && r.to == ids(to))
    }

    #[test]
    fn pocket_plate_is_one_cavity_under_the_parting_surface() {
        let id = identifier(&fixtures::pocket_plate());
        let mut g = id.primary_graph();
        assert_eq!(id.advance(&mut g).unwrap(), Advance::Finalized);
        let kinds: Vec<MacroKind> = g.macros.iter().map(|m| m.kind).collect();
        assert_eq!(kinds, [MacroKind::PartingSurface, MacroKind::Cavity]);
        let cavity = g.macro_by_id(ids("cavity-1")).unwrap();
        assert_eq!(cavity.members.len(), 3);
        assert!((cavity.height - 16.0).abs() < 0.5, "{}", cavity.height);
        assert_eq!(g.relations.len(), 1);
        assert!(has(&g, RelationKind::SuperposedOn, "parting-surface-1", "cavity-1"));
        assert!(g.hidden.is_empty());
    }

    #[test]
    fn stepped_pocket_relations() {
        let id = identifier(&fixtures::stepped_pocket_scene());
        let mut g = id.primary_graph();
        assert_eq!(id.advance(&mut g).unwrap(), Advance::Finalized);
        let order: Vec<(String, u8, u32)> = g.macros.iter().map(|m| (m.id.to_string(), m.step, m.iteration)).collect();
        assert_eq!(
            order,
            [
                ("parting-surface-1".to_string(), 1, 0),
                ("protrusion-1".to_string(), 2, 1),
                ("protrusion-2".to_string(), 2, 1),
                ("cavity-1".to_string(), 2, 2),
            ]
        );
        let tall = g.macro_by_id(ids("protrusion-1")).unwrap();
        let short = g.macro_by_id(ids("protrusion-2")).unwrap();
        let cavity = g.macro_by_id(ids("cavity-1")).unwrap();
        assert!(tall.top_level > short.top_level);
        assert!(tall.height > cavity.height && short.height < cavity.height);
        assert!(has(&g, RelationKind::Oversteps, "protrusion-1", "cavity-1"));
        assert!(has(&g, RelationKind::BelongsTo, "protrusion-2", "cavity-1"));
        assert!(has(&g, RelationKind::SuperposedOn, "parting-surface-1", "cavity-1"));
        let up = g.relations.iter().find(|r| r.from == ids("protrusion-1") && r.to == ids("parting-surface-1")).unwrap();
        assert_eq!(up.kind, RelationKind::Oversteps);
        assert!(up.propagated);
        assert_eq!(g.relations.len(), 4);
    }

    #[test]
    fn every_feature_is_placed_and_arcs_are_restored() {
        let id = identifier(&fixtures::stepped_pocket_scene());
        let mut g = id.primary_graph();
        id.advance(&mut g).unwrap();
        let assignment = g.assignment();
        for f in g.features.iter().filter(|f| f.kind != FeatureKind::Transition) {
            assert!(assignment.contains_key(&f.id), "{} unassigned", f.id);
        }
        assert!(g.hidden.is_empty());
        assert_eq!(g.stage, Stage::Finalized);
    }

    #[test]
    fn overrides_need_a_final_graph_and_repropagate() {
        let id = identifier(&fixtures::stepped_pocket_scene());
        let mut g = id.primary_graph();
        let change = DecisionInput::Override(RelationOverride { from: ids("protrusion-1"), to: ids("cavity-1"), kind: Some(RelationKind::BelongsTo) });
        assert!(matches!(id.apply(&mut g, &change), Err(IdentifyError::NotFinalized)));
        id.advance(&mut g).unwrap();
        id.apply(&mut g, &change).unwrap();
        let r: Vec<&TopoRelation> = g.relations_between(ids("protrusion-1"), ids("cavity-1")).collect();
        assert_eq!(r.len(), 1);
        assert!(r[0].overridden && r[0].kind == RelationKind::BelongsTo);
        // Nothing oversteps the cavity any more, so nothing carries upward.
        assert!(g.relations.iter().all(|r| !r.propagated));
        let gone = DecisionInput::Override(RelationOverride { from: ids("protrusion-2"), to: ids("cavity-1"), kind: None });
        id.apply(&mut g, &gone).unwrap();
        assert_eq!(g.relations_between(ids("protrusion-2"), ids("cavity-1")).count(), 0);
        let unknown = DecisionInput::Override(RelationOverride { from: ids("cavity-9"), to: ids("cavity-1"), kind: None });
        assert!(matches!(id.apply(&mut g, &unknown), Err(IdentifyError::UnknownMacro(_))));
    }

    #[test]
    fn mirrored_pocket_becomes_a_protrusion() {
        let id = identifier(&fixtures::pocket_plate().mirror());
        let mut g = id.primary_graph();
        id.advance(&mut g).unwrap();
        let kinds: Vec<MacroKind> = g.macros.iter().map(|m| m.kind).collect();
        assert_eq!(kinds, [MacroKind::PartingSurface, MacroKind::Protrusion]);
        assert!(has(&g, RelationKind::SuperposedOn, "parting-surface-1", "protrusion-1"));
    }

    #[test]
    fn graph_survives_json() {
        let id = identifier(&fixtures::stepped_pocket_scene());
        let mut g = id.primary_graph();
        id.advance(&mut g).unwrap();
        let back: TopoGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn macro_ids_round_trip() {
        for s in ["cavity-3", "protrusion-1", "parting-surface-1"] {
            assert_eq!(s.parse::<MacroId>().unwrap().to_string(), s);
        }
        assert!("pocket-1".parse::<MacroId>().is_err());
        assert!("cavity-x".parse::<MacroId>().is_err());
    }

    #[test]
    fn decision_input_is_untagged() {
        let d: DecisionInput = serde_json::from_str(r#"{"query":"query-transition-2","transition_splits":{"transition-2":[[1],[2]]}}"#).unwrap();
        assert!(matches!(d, DecisionInput::Decomposition(_)));
        let o: DecisionInput = serde_json::from_str(r#"{"from":"protrusion-1","to":"cavity-1","kind":"BelongsTo"}"#).unwrap();
        assert!(matches!(o, DecisionInput::Override(_)));
    }
}
