//! Serialized views of features, graphs and meshes.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::adjacency::AdjacencyRelation;
use crate::curvature::ShapeProperty;
use crate::macro_id::{MacroId, MacroKind, RelationKind, TopoGraph};
use crate::mesh::TriMesh;
use crate::segmentation::{FeatureId, FeatureKind, GeomFeature};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub kind: FeatureKind,
    pub faces: Vec<usize>,
    pub shape_property: ShapeProperty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub schema_version: u32,
    pub features: BTreeMap<FeatureId, FeatureEntry>,
}

impl FeatureTable {
    pub fn new(features: &[GeomFeature]) -> Self {
        FeatureTable {
            schema_version: SCHEMA_VERSION,
            features: features
                .iter()
                .map(|f| (f.id.clone(), FeatureEntry { kind: f.kind, faces: f.faces.clone(), shape_property: f.shape_property }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroNode {
    pub id: MacroId,
    pub kind: MacroKind,
    pub members: Vec<FeatureId>,
    pub height: f64,
    pub opening_level: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub kind: RelationKind,
    pub from: MacroId,
    pub to: MacroId,
    pub propagated: bool,
    pub overridden: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNode {
    pub id: FeatureId,
    pub kind: FeatureKind,
    pub shape_property: ShapeProperty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_id: Option<MacroId>,
    pub faces: Vec<usize>,
}

/// Feature-level subgraph embedded in the final graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSubgraph {
    pub features: Vec<FeatureNode>,
    pub arcs: Vec<AdjacencyRelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalGraph {
    pub schema_version: u32,
    pub nodes: Vec<MacroNode>,
    pub edges: Vec<RelationEdge>,
    pub subgraph: FeatureSubgraph,
}

impl FinalGraph {
    pub fn new(g: &TopoGraph) -> Self {
        let assignment = g.assignment();
        FinalGraph {
            schema_version: SCHEMA_VERSION,
            nodes: g
                .macros
                .iter()
                .map(|m| MacroNode { id: m.id, kind: m.kind, members: m.members.clone(), height: m.height, opening_level: m.opening_level })
                .collect(),
            edges: g
                .relations
                .iter()
                .map(|r| RelationEdge { kind: r.kind, from: r.from, to: r.to, propagated: r.propagated, overridden: r.overridden })
                .collect(),
            subgraph: FeatureSubgraph {
                features: g
                    .features
                    .iter()
                    .map(|f| FeatureNode {
                        id: f.id.clone(),
                        kind: f.kind,
                        shape_property: f.shape_property,
                        macro_id: assignment.get(&f.id).copied(),
                        faces: f.faces.clone(),
                    })
                    .collect(),
                arcs: g.arcs.clone(),
            },
        }
    }
}

/// Canonical text of the final graph, shared by every output path. Floats
/// use the shortest representation that parses back to the same value.
pub fn final_graph_json(g: &TopoGraph) -> String {
    let mut text = serde_json::to_string_pretty(&FinalGraph::new(g)).expect("final graph serializes");
    text.push('\n');
    text
}

/// Indexed mesh with one feature label and color per face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColoredMesh {
    pub schema_version: u32,
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    /// Feature of each face, `null` for faces no feature holds.
    pub face_features: Vec<Option<FeatureId>>,
    pub face_macros: Vec<Option<MacroId>>,
    pub colors: BTreeMap<FeatureId, String>,
}

/// Kind hue with the shade varied per feature.
pub fn feature_color(id: &FeatureId) -> String {
    let base: [u8; 3] = match id.kind {
        FeatureKind::Bottom => [60, 120, 200],
        FeatureKind::Flank => [200, 90, 60],
        FeatureKind::Transition => [90, 170, 90],
    };
    let salt = id.path.iter().fold(7u32, |h, &p| h.wrapping_mul(31).wrapping_add(p));
    let shade = |c: u8, k: u32| -> u8 { (c as i32 + ((salt.wrapping_mul(k) % 61) as i32 - 30)).clamp(0, 255) as u8 };
    let [r, g, b] = base;
    format!("#{:02x}{:02x}{:02x}", shade(r, 17), shade(g, 29), shade(b, 43))
}

impl ColoredMesh {
    pub fn new(mesh: &TriMesh, g: &TopoGraph) -> Self {
        let assignment = g.assignment();
        let mut face_features = vec![None; mesh.faces.len()];
        let mut face_macros = vec![None; mesh.faces.len()];
        for f in &g.features {
            let m = assignment.get(&f.id).copied();
            for &face in &f.faces {
                face_features[face] = Some(f.id.clone());
                face_macros[face] = m;
            }
        }
        ColoredMesh {
            schema_version: SCHEMA_VERSION,
            vertices: mesh.vertices.iter().map(|p| [p.x, p.y, p.z]).collect(),
            faces: mesh.faces.clone(),
            face_features,
            face_macros,
            colors: g.features.iter().map(|f| (f.id.clone(), feature_color(&f.id))).collect(),
        }
    }
}

fn quoted(s: impl std::fmt::Display) -> String {
    format!("\"{s}\"")
}

/// Primary graph: feature nodes and adjacency arcs.
pub fn primary_dot(features: &[GeomFeature], arcs: &[AdjacencyRelation]) -> String {
    let mut out = String::from("graph primary {\n  node [shape=box];\n");
    for f in features.iter().filter(|f| f.kind != FeatureKind::Transition) {
        let _ = writeln!(out, "  {} [label=\"{}\\n{:?}\"];", quoted(&f.id), f.id, f.shape_property);
    }
    for a in arcs {
        match a.ends.as_slice() {
            [x, y] => {
                let _ = writeln!(out, "  {} -- {} [label=\"{}\"];", quoted(x), quoted(y), a.label());
            }
            [x] if a.to_bounding_box => {
                let _ = writeln!(out, "  {} -- \"bounding-box\" [label=\"{}\"];", quoted(x), a.label());
            }
            ends => {
                let hub = format!("arc-{}", a.id);
                let _ = writeln!(out, "  {} [shape=point];", quoted(&hub));
                for e in ends {
                    let _ = writeln!(out, "  {} -- {} [label=\"{}\"];", quoted(&hub), quoted(e), a.label());
                }
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Macro graph: macros as clusters around their features, relations as
/// labeled directed edges.
pub fn macro_dot(g: &TopoGraph) -> String {
    let mut out = String::from("digraph macros {\n  compound=true;\n  node [shape=box];\n");
    for m in &g.macros {
        let _ = writeln!(out, "  subgraph {} {{", quoted(format!("cluster_{}", m.id)));
        let _ = writeln!(out, "    label=\"{}\\nh={:.3}\";", m.id, m.height);
        let _ = writeln!(out, "    {} [label=\"{}\", shape=ellipse];", quoted(m.id), m.id);
        for f in &m.members {
            let _ = writeln!(out, "    {} [label=\"{}\", fontsize=9];", quoted(f), f);
        }
        out.push_str("  }\n");
    }
    for r in &g.relations {
        let style = if r.propagated { ", style=dashed" } else { "" };
        let _ = writeln!(out, "  {} -> {} [label=\"{:?}\"{}];", quoted(r.from), quoted(r.to), r.kind, style);
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::macro_id::{Identifier, IdentifyOptions};
    use crate::mesh::weld_and_connect;
    use crate::segmentation::MachiningSetup;

    fn finalized() -> (Identifier, TopoGraph) {
        let mesh = weld_and_connect(&fixtures::stepped_pocket_scene().soup().mesh(), 1e-7).unwrap();
        let id = Identifier::new(mesh, MachiningSetup::default(), IdentifyOptions::default());
        let mut g = id.primary_graph();
        id.advance(&mut g).unwrap();
        (id, g)
    }

    #[test]
    fn final_graph_round_trips() {
        let (_, g) = finalized();
        let f = FinalGraph::new(&g);
        assert_eq!(f.nodes.len(), 4);
        assert_eq!(f.edges.len(), 4);
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"schema_version\":1"));
        let back: FinalGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn dot_lists_macros_and_relations() {
        let (_, g) = finalized();
        let dot = macro_dot(&g);
        assert!(dot.starts_with("digraph"));
        for m in ["parting-surface-1", "protrusion-1", "protrusion-2", "cavity-1"] {
            assert!(dot.contains(&format!("\"cluster_{m}\"")), "{m}");
        }
        assert!(dot.contains("\"protrusion-1\" -> \"cavity-1\" [label=\"Oversteps\"]"));
        assert!(dot.contains("style=dashed"));
        let primary = primary_dot(&g.features, &g.arcs);
        assert!(primary.contains("Concave") && primary.contains("Convex"));
    }

    #[test]
    fn colored_mesh_labels_every_face() {
        let (id, g) = finalized();
        let m = ColoredMesh::new(&id.mesh.mesh, &g);
        assert_eq!(m.face_features.len(), id.mesh.face_count());
        assert!(m.face_features.iter().all(Option::is_some));
        // Only transitions between two macros stay unowned.
        for (f, mac) in m.face_features.iter().zip(&m.face_macros) {
            assert!(mac.is_some() || f.as_ref().unwrap().kind == FeatureKind::Transition);
        }
        assert!(m.colors.values().all(|c| c.len() == 7 && c.starts_with('#')));
    }

    #[test]
    fn feature_table_keys_are_ids() {
        let (_, g) = finalized();
        let t = FeatureTable::new(&g.features);
        let v: serde_json::Value = serde_json::to_value(&t).unwrap();
        assert!(v["features"]["bottom-1"]["faces"].is_array());
        assert_eq!(v["features"]["flank-2"]["kind"], "Flank");
    }
}
