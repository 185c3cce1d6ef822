//! Flank / bottom / transition segmentation by angle to the tool axis.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::curvature::{feature_shape_property, CurvatureThresholds, Curvatures, ShapeProperty};
use crate::mesh::{HalfEdgeMesh, Point, Vector};

#[derive(Debug, Error, PartialEq)]
pub enum SetupError {
    #[error("tool axis must be a non-zero finite vector")]
    BadAxis,
    #[error("angles must satisfy 0 < theta_bottom < theta_flank < 90, got {0} and {1}")]
    BadAngles(f64, f64),
}

/// Tool orientation and the angle thresholds separating the three classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachiningSetup {
    pub tool_axis: Vector,
    /// Degrees.
    pub theta_bottom: f64,
    /// Degrees.
    pub theta_flank: f64,
}

impl Default for MachiningSetup {
    fn default() -> Self {
        MachiningSetup { tool_axis: Vector::z(), theta_bottom: 30.0, theta_flank: 60.0 }
    }
}

impl MachiningSetup {
    pub fn new(tool_axis: Vector, theta_bottom: f64, theta_flank: f64) -> Result<Self, SetupError> {
        let axis = tool_axis.try_normalize(1e-12).filter(|a| a.iter().all(|c| c.is_finite())).ok_or(SetupError::BadAxis)?;
        if !(0.0 < theta_bottom && theta_bottom < theta_flank && theta_flank < 90.0) {
            return Err(SetupError::BadAngles(theta_bottom, theta_flank));
        }
        Ok(MachiningSetup { tool_axis: axis, theta_bottom, theta_flank })
    }

    /// Height of a point along the tool axis.
    pub fn level(&self, p: &Point) -> f64 {
        p.coords.dot(&self.tool_axis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    Bottom,
    Flank,
    Transition,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Bottom => "bottom",
            FeatureKind::Flank => "flank",
            FeatureKind::Transition => "transition",
        }
    }
}

/// Per-face class; `undercut` marks faces pointing away from the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceClass {
    pub kind: FeatureKind,
    pub undercut: bool,
}

pub fn classify_face(normal: &Vector, setup: &MachiningSetup) -> FaceClass {
    let cos = normal.dot(&setup.tool_axis).clamp(-1.0, 1.0);
    let theta = cos.acos().to_degrees();
    let kind = if theta <= setup.theta_bottom {
        FeatureKind::Bottom
    } else if theta >= setup.theta_flank && theta <= 90.0 {
        FeatureKind::Flank
    } else {
        FeatureKind::Transition
    };
    FaceClass { kind, undercut: theta > 90.0 }
}

/// Stable feature name such as `bottom-3` or, after decomposition, `flank-1.2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureId {
    pub kind: FeatureKind,
    pub path: Vec<u32>,
}

impl FeatureId {
    pub fn new(kind: FeatureKind, number: u32) -> Self {
        FeatureId { kind, path: vec![number] }
    }

    pub fn child(&self, index: u32) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        FeatureId { kind: self.kind, path }
    }
}

impl Ord for FeatureId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind.cmp(&other.kind).then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialOrd for FeatureId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-", self.kind.name())?;
        for (i, p) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid feature id '{0}'")]
pub struct ParseFeatureIdError(pub String);

impl FromStr for FeatureId {
    type Err = ParseFeatureIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFeatureIdError(s.to_string());
        let (kind, rest) = s.split_once('-').ok_or_else(err)?;
        let kind = match kind {
            "bottom" => FeatureKind::Bottom,
            "flank" => FeatureKind::Flank,
            "transition" => FeatureKind::Transition,
            _ => return Err(err()),
        };
        let path = rest.split('.').map(|p| p.parse::<u32>().map_err(|_| err())).collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureId { kind, path })
    }
}

impl Serialize for FeatureId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A maximal run of a feature's boundary sharing one neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryChain {
    /// Half-edges on the feature side, in loop order.
    pub half_edges: Vec<u32>,
    /// Neighboring feature, `None` on the open mesh boundary.
    pub neighbor: Option<FeatureId>,
    /// The chain is a full cycle shared with a single neighboring feature.
    pub closed: bool,
}

impl BoundaryChain {
    pub fn length(&self, mesh: &HalfEdgeMesh) -> f64 {
        self.half_edges.iter().map(|&h| (mesh.position(mesh.dest(h)) - mesh.position(mesh.he(h).origin)).norm()).sum()
    }

    pub fn vertices(&self, mesh: &HalfEdgeMesh) -> Vec<u32> {
        let mut v: Vec<u32> = self.half_edges.iter().map(|&h| mesh.he(h).origin).collect();
        if let Some(&last) = self.half_edges.last() {
            if !self.closed {
                v.push(mesh.dest(last));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomFeature {
    pub id: FeatureId,
    pub kind: FeatureKind,
    /// Sorted face indices.
    pub faces: Vec<usize>,
    pub shape_property: ShapeProperty,
    pub boundary_loops: Vec<BoundaryChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_of: Option<FeatureId>,
    /// Set when quasi-parallel features were fused into one machining feature.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub aggregate: bool,
}

impl GeomFeature {
    pub fn chains_with<'a>(&'a self, other: &'a FeatureId) -> impl Iterator<Item = &'a BoundaryChain> + 'a {
        self.boundary_loops.iter().filter(move |c| c.neighbor.as_ref() == Some(other))
    }

    pub fn neighbors(&self) -> Vec<FeatureId> {
        let mut n: Vec<FeatureId> = self.boundary_loops.iter().filter_map(|c| c.neighbor.clone()).collect();
        n.sort();
        n.dedup();
        n
    }

    pub fn touches_mesh_boundary(&self) -> bool {
        self.boundary_loops.iter().any(|c| c.neighbor.is_none())
    }
}

/// Result of classifying faces and growing features.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub classes: Vec<FaceClass>,
    pub features: Vec<GeomFeature>,
    pub undercut_faces: usize,
}

pub fn classify_faces(mesh: &HalfEdgeMesh, setup: &MachiningSetup) -> Vec<FaceClass> {
    mesh.mesh.face_normals.iter().map(|n| classify_face(n, setup)).collect()
}

/// Edge-connected components of faces accepted by `keep`, each sorted, in
/// order of their lowest face.
pub fn connected_components(mesh: &HalfEdgeMesh, faces: &[usize], same: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let set: HashSet<usize> = faces.iter().copied().collect();
    let mut seen = HashSet::with_capacity(faces.len());
    let mut sorted = faces.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    for &start in &sorted {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(f) = queue.pop_front() {
            for g in mesh.face_neighbors(f).into_iter().flatten() {
                if set.contains(&g) && same(f, g) && seen.insert(g) {
                    comp.push(g);
                    queue.push_back(g);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Grows maximal same-class edge-connected features and numbers them per
/// kind by lowest face index.
pub fn grow_features(
    mesh: &HalfEdgeMesh,
    classes: &[FaceClass],
    curvatures: &Curvatures,
    thresholds: CurvatureThresholds,
) -> Vec<GeomFeature> {
    let all: Vec<usize> = (0..mesh.face_count()).collect();
    let mut comps = connected_components(mesh, &all, |a, b| classes[a].kind == classes[b].kind);
    comps.sort_by_key(|c| (classes[c[0]].kind, c[0]));
    let mut counters = [0u32; 3];
    let mut features: Vec<GeomFeature> = comps
        .into_iter()
        .map(|faces| {
            let kind = classes[faces[0]].kind;
            counters[kind as usize] += 1;
            let shape_property = feature_shape_property(&faces, mesh, curvatures, thresholds).property;
            GeomFeature {
                id: FeatureId::new(kind, counters[kind as usize]),
                kind,
                faces,
                shape_property,
                boundary_loops: Vec::new(),
                sub_of: None,
                aggregate: false,
            }
        })
        .collect();
    refresh_boundaries(mesh, &mut features);
    features
}

/// Face → index into `features`.
pub fn face_owner(face_count: usize, features: &[GeomFeature]) -> Vec<usize> {
    let mut owner = vec![usize::MAX; face_count];
    for (i, f) in features.iter().enumerate() {
        for &face in &f.faces {
            owner[face] = i;
        }
    }
    owner
}

pub fn refresh_boundaries(mesh: &HalfEdgeMesh, features: &mut [GeomFeature]) {
    let owner = face_owner(mesh.face_count(), features);
    let loops: Vec<Vec<BoundaryChain>> = features
        .iter()
        .map(|f| {
            boundary_loops(&f.faces, mesh, |face| {
                let o = owner[face];
                (o != usize::MAX).then(|| features[o].id.clone())
            })
        })
        .collect();
    for (f, l) in features.iter_mut().zip(loops) {
        f.boundary_loops = l;
    }
}

/// Splits the boundary of a face set into chains of constant neighbor.
pub fn boundary_loops(faces: &[usize], mesh: &HalfEdgeMesh, owner: impl Fn(usize) -> Option<FeatureId>) -> Vec<BoundaryChain> {
    let set: HashSet<usize> = faces.iter().copied().collect();
    let is_boundary = |h: u32| match mesh.opposite_face(h) {
        None => true,
        Some(g) => !set.contains(&g),
    };
    let mut boundary: Vec<u32> = faces.iter().flat_map(|&f| (0..3).map(move |i| (3 * f + i) as u32)).filter(|&h| is_boundary(h)).collect();
    boundary.sort_unstable();
    let neighbor = |h: u32| mesh.opposite_face(h).and_then(&owner);
    let next_boundary = |h: u32| -> Option<u32> {
        let mut g = mesh.he(h).next;
        for _ in 0..64 {
            if is_boundary(g) {
                return Some(g);
            }
            g = mesh.he(mesh.twin(g)?).next;
        }
        None
    };
    let mut visited: HashSet<u32> = HashSet::with_capacity(boundary.len());
    let mut chains = Vec::new();
    for &start in &boundary {
        if visited.contains(&start) {
            continue;
        }
        let mut lp = vec![start];
        visited.insert(start);
        let mut h = start;
        let mut cycle = false;
        while let Some(n) = next_boundary(h) {
            if n == start {
                cycle = true;
                break;
            }
            if !visited.insert(n) {
                break;
            }
            lp.push(n);
            h = n;
        }
        let labels: Vec<Option<FeatureId>> = lp.iter().map(|&h| neighbor(h)).collect();
        let uniform = labels.iter().all(|l| *l == labels[0]);
        if uniform {
            let closed = cycle && labels[0].is_some();
            chains.push(BoundaryChain { half_edges: lp, neighbor: labels[0].clone(), closed });
            continue;
        }
        // Rotate so the loop starts at a neighbor change, then cut into runs.
        let n = lp.len();
        let shift = if cycle { (1..n).find(|&i| labels[i] != labels[i - 1]).unwrap_or(0) } else { 0 };
        let mut run: Vec<u32> = Vec::new();
        let mut run_label: Option<FeatureId> = None;
        for k in 0..n {
            let i = (k + shift) % n;
            if !run.is_empty() && labels[i] != run_label {
                chains.push(BoundaryChain { half_edges: std::mem::take(&mut run), neighbor: run_label.clone(), closed: false });
            }
            run_label = labels[i].clone();
            run.push(lp[i]);
        }
        if !run.is_empty() {
            chains.push(BoundaryChain { half_edges: run, neighbor: run_label, closed: false });
        }
    }
    chains
}

/// Default size below which a same-class region is treated as tessellation
/// noise and relabeled.
pub const DEFAULT_MIN_FEATURE_FACES: usize = 8;

/// Relabels every same-class region smaller than `min_faces` with the class
/// of the neighbor sharing the longest boundary, until none is left.
///
/// Returns the number of relabeled faces. `min_faces <= 1` is a no-op.
pub fn absorb_small_regions(mesh: &HalfEdgeMesh, classes: &mut [FaceClass], min_faces: usize) -> usize {
    let all: Vec<usize> = (0..mesh.face_count()).collect();
    let mut relabeled = 0;
    for _ in 0..32 {
        let comps = connected_components(mesh, &all, |a, b| classes[a].kind == classes[b].kind);
        let mut changed = false;
        for comp in comps.iter().filter(|c| c.len() < min_faces) {
            let kind = classes[comp[0]].kind;
            let mut weight = [0.0f64; 3];
            for &f in comp {
                for i in 0..3 {
                    let h = (3 * f + i) as u32;
                    let Some(g) = mesh.opposite_face(h) else { continue };
                    let other = classes[g].kind;
                    if other != kind {
                        weight[other as usize] += (mesh.position(mesh.dest(h)) - mesh.position(mesh.he(h).origin)).norm();
                    }
                }
            }
            let best = (0..3).filter(|&k| weight[k] > 0.0).max_by(|&a, &b| weight[a].total_cmp(&weight[b]).then(b.cmp(&a)));
            let Some(best) = best else { continue };
            let target = [FeatureKind::Bottom, FeatureKind::Flank, FeatureKind::Transition][best];
            for &f in comp {
                classes[f].kind = target;
            }
            relabeled += comp.len();
            changed = true;
        }
        if !changed {
            break;
        }
    }
    relabeled
}

pub fn segment(
    mesh: &HalfEdgeMesh,
    setup: &MachiningSetup,
    curvatures: &Curvatures,
    thresholds: CurvatureThresholds,
) -> Segmentation {
    segment_with(mesh, setup, curvatures, thresholds, DEFAULT_MIN_FEATURE_FACES)
}

pub fn segment_with(
    mesh: &HalfEdgeMesh,
    setup: &MachiningSetup,
    curvatures: &Curvatures,
    thresholds: CurvatureThresholds,
    min_feature_faces: usize,
) -> Segmentation {
    let mut classes = classify_faces(mesh, setup);
    let absorbed = absorb_small_regions(mesh, &mut classes, min_feature_faces);
    if absorbed > 0 {
        log::debug!("relabeled {absorbed} face(s) in regions below {min_feature_faces} faces");
    }
    let undercut_faces = classes.iter().filter(|c| c.undercut).count();
    if undercut_faces > 0 {
        log::warn!("{undercut_faces} face(s) point away from the tool axis; kept as transitions");
    }
    let features = grow_features(mesh, &classes, curvatures, thresholds);
    Segmentation { classes, features, undercut_faces }
}
