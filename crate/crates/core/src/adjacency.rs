//! Adjacency arcs between flank and bottom features and the material-angle
//! test deciding whether an arc is concave or convex.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::curvature::{feature_shape_property, CurvatureThresholds, Curvatures, ShapeProperty};
use crate::mesh::{HalfEdgeMesh, Point, Vector};
use crate::segmentation::{refresh_boundaries, FeatureId, FeatureKind, GeomFeature, MachiningSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelProperty {
    Concave,
    Convex,
    Unspecified,
}

impl From<ShapeProperty> for RelProperty {
    fn from(p: ShapeProperty) -> Self {
        match p {
            ShapeProperty::Concave => RelProperty::Concave,
            ShapeProperty::Convex => RelProperty::Convex,
            ShapeProperty::Unspecified => RelProperty::Unspecified,
        }
    }
}

impl RelProperty {
    pub fn mirrored(self) -> Self {
        match self {
            RelProperty::Concave => RelProperty::Convex,
            RelProperty::Convex => RelProperty::Concave,
            RelProperty::Unspecified => RelProperty::Unspecified,
        }
    }
}

/// Edge-sharing link between flank/bottom features, usually through a
/// transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyRelation {
    pub id: u32,
    pub transition: Option<FeatureId>,
    /// Sorted. Two for a simple arc, more for a complex one, one for an arc to
    /// the bounding box.
    pub ends: Vec<FeatureId>,
    pub property: RelProperty,
    pub closed: bool,
    pub complex: bool,
    /// Property came from the material-angle test rather than the transition.
    #[serde(default)]
    pub resolved: bool,
    #[serde(default)]
    pub to_bounding_box: bool,
}

impl AdjacencyRelation {
    pub fn links(&self, f: &FeatureId) -> bool {
        self.ends.contains(f)
    }

    pub fn other(&self, f: &FeatureId) -> Option<&FeatureId> {
        if self.ends.len() != 2 {
            return None;
        }
        if &self.ends[0] == f {
            Some(&self.ends[1])
        } else if &self.ends[1] == f {
            Some(&self.ends[0])
        } else {
            None
        }
    }

    pub fn label(&self) -> &'static str {
        if self.complex {
            return "Complex";
        }
        match self.property {
            RelProperty::Concave => "Concave",
            RelProperty::Convex => "Convex",
            RelProperty::Unspecified => "Unspecified",
        }
    }
}

pub fn find_feature<'a>(features: &'a [GeomFeature], id: &FeatureId) -> Option<&'a GeomFeature> {
    features.binary_search_by(|f| f.id.cmp(id)).ok().map(|i| &features[i])
}

/// Arcs implied by shared edges, numbered from `first_id`. Properties come
/// from the transitions; nothing is resolved here.
pub fn derive_arcs(features: &[GeomFeature], first_id: u32) -> Vec<AdjacencyRelation> {
    let mut arcs = Vec::new();
    let mut id = first_id;
    for t in features.iter().filter(|f| f.kind == FeatureKind::Transition) {
        let linked: Vec<FeatureId> = t.neighbors().into_iter().filter(|n| n.kind != FeatureKind::Transition).collect();
        if linked.len() < 2 {
            log::warn!("{} links {} flank/bottom feature(s); no arc", t.id, linked.len());
            continue;
        }
        let complex = linked.len() > 2;
        let closed = !complex && linked.iter().all(|e| t.chains_with(e).all(|c| c.closed));
        let property = if complex { RelProperty::Unspecified } else { t.shape_property.into() };
        arcs.push(AdjacencyRelation {
            id,
            transition: Some(t.id.clone()),
            ends: linked,
            property,
            closed,
            complex,
            resolved: false,
            to_bounding_box: false,
        });
        id += 1;
    }
    for f in features.iter().filter(|f| f.kind == FeatureKind::Flank) {
        for b in f.neighbors().into_iter().filter(|n| n.kind == FeatureKind::Bottom) {
            let closed = f.chains_with(&b).all(|c| c.closed);
            arcs.push(AdjacencyRelation {
                id,
                transition: None,
                ends: vec![b, f.id.clone()],
                property: RelProperty::Unspecified,
                closed,
                complex: false,
                resolved: false,
                to_bounding_box: false,
            });
            id += 1;
        }
    }
    arcs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoints {
    pub q1: Point,
    pub q2: Point,
}

/// Closest points of the lines `p1 + t n1` and `p2 + s n2`; `None` when the
/// lines are parallel.
pub fn closest_points_between_lines(p1: &Point, n1: &Vector, p2: &Point, n2: &Vector) -> Option<ClosestPoints> {
    if n1.cross(n2).norm() < 1e-9 {
        return None;
    }
    let w = p1 - p2;
    let (a, b, c) = (n1.dot(n1), n1.dot(n2), n2.dot(n2));
    let (d, e) = (n1.dot(&w), n2.dot(&w));
    let den = a * c - b * b;
    let t = (b * e - c * d) / den;
    let s = (a * e - b * d) / den;
    Some(ClosestPoints { q1: p1 + n1 * t, q2: p2 + n2 * s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Concave,
    Convex,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialAngle {
    pub resolution: Resolution,
    pub concave_votes: usize,
    pub convex_votes: usize,
    pub samples: usize,
    pub parallel_samples: usize,
    /// Smallest over samples of `max(|P1Q1|, |P2Q2|)`; infinite when every
    /// sample was parallel.
    pub min_spread: f64,
}

impl MaterialAngle {
    pub fn property(&self) -> Option<RelProperty> {
        match self.resolution {
            Resolution::Concave => Some(RelProperty::Concave),
            Resolution::Convex => Some(RelProperty::Convex),
            Resolution::Indeterminate => None,
        }
    }
}

pub const DEFAULT_SAMPLES: usize = 5;

/// One side of a contact: a polyline and, per segment, the faces of the
/// endpoint feature whose normals stand for that side.
struct Side {
    segments: Vec<(Point, Point, Vector)>,
}

impl Side {
    fn length(&self) -> f64 {
        self.segments.iter().map(|(a, b, _)| (b - a).norm()).sum()
    }

    fn at(&self, fraction: f64) -> (Point, Vector, Vector) {
        let target = fraction * self.length();
        let mut acc = 0.0;
        let last = self.segments.len() - 1;
        for (i, (a, b, n)) in self.segments.iter().enumerate() {
            let l = (b - a).norm();
            if acc + l >= target || i == last {
                let t = if l > 0.0 { ((target - acc) / l).clamp(0.0, 1.0) } else { 0.5 };
                return (a + (b - a) * t, b - a, *n);
            }
            acc += l;
        }
        unreachable!("side has at least one segment")
    }

    /// Nearest crossing with the plane through `p` with normal `m`, else the
    /// nearest point of the polyline.
    fn hit(&self, p: &Point, m: &Vector) -> (Point, Vector) {
        let mut best: Option<(f64, Point, Vector)> = None;
        for (a, b, n) in &self.segments {
            let (da, db) = ((a - p).dot(m), (b - p).dot(m));
            if da * db > 0.0 || (da == 0.0 && db == 0.0) {
                continue;
            }
            let x = a + (b - a) * (da / (da - db));
            let d = (x - p).norm();
            if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                best = Some((d, x, *n));
            }
        }
        if let Some((_, x, n)) = best {
            return (x, n);
        }
        let mut best = (f64::INFINITY, *p, Vector::zeros());
        for (a, b, n) in &self.segments {
            let ab = b - a;
            let t = if ab.norm_squared() > 0.0 { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
            let x = a + ab * t;
            let d = (x - p).norm();
            if d < best.0 {
                best = (d, x, *n);
            }
        }
        (best.1, best.2)
    }
}

/// Area-weighted normal of the faces of `feature` around the vertices of
/// half-edge `h`.
fn side_normal(mesh: &HalfEdgeMesh, feature: &GeomFeature, h: u32) -> Vector {
    let mut n = Vector::zeros();
    for v in [mesh.he(h).origin, mesh.dest(h)] {
        for &f in mesh.vertex_faces(v as usize) {
            if feature.faces.binary_search(&(f as usize)).is_ok() {
                n += mesh.mesh.face_normals[f as usize] * mesh.mesh.face_area(f as usize);
            }
        }
    }
    n.try_normalize(0.0).unwrap_or_else(Vector::zeros)
}

/// Builds the polyline where `owner` touches `other`, with normals taken on
/// `normals_of`. With `offset`, points are moved to the centroid of the
/// `normals_of` face across each edge, which keeps the two sides of a raw
/// contact apart.
fn side(mesh: &HalfEdgeMesh, owner: &GeomFeature, other: &FeatureId, normals_of: &GeomFeature, offset: bool) -> Side {
    let mut segments = Vec::new();
    for chain in owner.chains_with(other) {
        for &h in &chain.half_edges {
            let (a, b) = (mesh.position(mesh.he(h).origin), mesh.position(mesh.dest(h)));
            let n = side_normal(mesh, normals_of, h);
            if offset {
                let face = if normals_of.id == owner.id { mesh.he(h).face as usize } else { mesh.opposite_face(h).unwrap() };
                let shift = mesh.mesh.face_centroid(face) - Point::from((a.coords + b.coords) * 0.5);
                segments.push((a + shift, b + shift, n));
            } else {
                segments.push((a, b, n));
            }
        }
    }
    Side { segments }
}

/// Material-angle test for a simple arc, sampling `k` points along the
/// contact with the first endpoint.
pub fn resolve_property(
    arc: &AdjacencyRelation,
    features: &[GeomFeature],
    mesh: &HalfEdgeMesh,
    setup: &MachiningSetup,
    k: usize,
) -> MaterialAngle {
    let undecided = MaterialAngle {
        resolution: Resolution::Indeterminate,
        concave_votes: 0,
        convex_votes: 0,
        samples: 0,
        parallel_samples: 0,
        min_spread: f64::INFINITY,
    };
    if arc.complex || arc.ends.len() != 2 {
        return undecided;
    }
    let (Some(a), Some(b)) = (find_feature(features, &arc.ends[0]), find_feature(features, &arc.ends[1])) else {
        return undecided;
    };
    let (side_a, side_b) = match &arc.transition {
        Some(t) => {
            let Some(t) = find_feature(features, t) else { return undecided };
            (side(mesh, t, &a.id, a, false), side(mesh, t, &b.id, b, false))
        }
        None => (side(mesh, a, &b.id, a, true), side(mesh, a, &b.id, b, true)),
    };
    if side_a.segments.is_empty() || side_b.segments.is_empty() {
        return undecided;
    }
    material_angle(&side_a, &side_b, &setup.tool_axis, k)
}

fn material_angle(side_a: &Side, side_b: &Side, axis: &Vector, k: usize) -> MaterialAngle {
    let k = k.max(1);
    let (mut concave, mut convex, mut parallel) = (0, 0, 0);
    let mut min_spread = f64::INFINITY;
    let scale = side_a.length().max(side_b.length()).max(1e-300);
    for i in 0..k {
        let (p1, tangent, n1) = side_a.at((i as f64 + 0.5) / k as f64);
        let projected = tangent - axis * tangent.dot(axis);
        let plane_normal = projected.try_normalize(1e-9 * tangent.norm().max(1e-300)).unwrap_or_else(|| tangent.normalize());
        let (p2, n2) = side_b.hit(&p1, &plane_normal);
        if n1.norm() == 0.0 || n2.norm() == 0.0 {
            continue;
        }
        let Some(q) = closest_points_between_lines(&p1, &n1, &p2, &n2) else {
            parallel += 1;
            continue;
        };
        let d1 = (q.q1 - p1).dot(&n1);
        let d2 = (q.q2 - p2).dot(&n2);
        min_spread = min_spread.min((q.q1 - p1).norm().max((q.q2 - p2).norm()));
        let eps = 1e-12 * scale;
        if d1 > eps && d2 > eps {
            concave += 1;
        } else if d1 < -eps && d2 < -eps {
            convex += 1;
        }
    }
    let resolution = match concave.cmp(&convex) {
        std::cmp::Ordering::Greater => Resolution::Concave,
        std::cmp::Ordering::Less => Resolution::Convex,
        std::cmp::Ordering::Equal => Resolution::Indeterminate,
    };
    MaterialAngle { resolution, concave_votes: concave, convex_votes: convex, samples: k, parallel_samples: parallel, min_spread }
}

/// Whether an unresolved arc joins two quasi-parallel features that should be
/// machined as one.
pub fn should_merge(test: &MaterialAngle, threshold: f64) -> bool {
    test.resolution == Resolution::Indeterminate && (test.parallel_samples == test.samples || test.min_spread > threshold)
}

/// Fuses both endpoints and the transition of `arc` into one aggregate
/// feature that keeps the smaller id of the resulting kind. Returns the id.
pub fn merge_quasi_parallel(
    arc: &AdjacencyRelation,
    features: &mut Vec<GeomFeature>,
    mesh: &HalfEdgeMesh,
    curvatures: &Curvatures,
    thresholds: CurvatureThresholds,
) -> Option<FeatureId> {
    if arc.ends.len() != 2 {
        return None;
    }
    let mut parts: BTreeSet<FeatureId> = arc.ends.iter().cloned().collect();
    if let Some(t) = &arc.transition {
        parts.insert(t.clone());
    }
    let kind = if arc.ends.iter().all(|e| e.kind == FeatureKind::Bottom) { FeatureKind::Bottom } else { FeatureKind::Flank };
    let keep = arc.ends.iter().filter(|e| e.kind == kind).min()?.clone();
    let mut faces: Vec<usize> = features.iter().filter(|f| parts.contains(&f.id)).flat_map(|f| f.faces.iter().copied()).collect();
    faces.sort_unstable();
    features.retain(|f| !parts.contains(&f.id));
    let shape_property = feature_shape_property(&faces, mesh, curvatures, thresholds).property;
    let merged = GeomFeature {
        id: keep.clone(),
        kind,
        faces,
        shape_property,
        boundary_loops: Vec::new(),
        sub_of: None,
        aggregate: true,
    };
    let at = features.binary_search_by(|f| f.id.cmp(&keep)).unwrap_err();
    features.insert(at, merged);
    refresh_boundaries(mesh, features);
    Some(keep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    pub samples: usize,
    /// Distance beyond which an undecidable arc is taken as quasi-parallel.
    /// `None` uses the mesh bounding-box diagonal.
    pub merge_threshold: Option<f64>,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions { samples: DEFAULT_SAMPLES, merge_threshold: None }
    }
}

/// Derives the arcs, resolves unspecified simple arcs and fuses
/// quasi-parallel features until every simple arc is settled.
pub fn build_primary_arcs(
    features: &mut Vec<GeomFeature>,
    mesh: &HalfEdgeMesh,
    setup: &MachiningSetup,
    curvatures: &Curvatures,
    thresholds: CurvatureThresholds,
    options: GraphOptions,
) -> Vec<AdjacencyRelation> {
    let threshold = options.merge_threshold.unwrap_or_else(|| mesh.mesh.bounding_box().diagonal());
    loop {
        let mut arcs = derive_arcs(features, 0);
        let mut merge = None;
        for arc in arcs.iter_mut().filter(|a| !a.complex && a.property == RelProperty::Unspecified) {
            let test = resolve_property(arc, features, mesh, setup, options.samples);
            match test.property() {
                Some(p) => {
                    arc.property = p;
                    arc.resolved = true;
                }
                None if should_merge(&test, threshold) => {
                    merge = Some(arc.clone());
                    break;
                }
                None => log::warn!("arc {} between {} and {} stays unspecified", arc.id, arc.ends[0], arc.ends[1]),
            }
        }
        match merge {
            Some(arc) => {
                let id = merge_quasi_parallel(&arc, features, mesh, curvatures, thresholds);
                log::info!("merged quasi-parallel features into {}", id.map(|i| i.to_string()).unwrap_or_default());
            }
            None => return arcs,
        }
    }
}
