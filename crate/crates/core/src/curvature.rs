//! Discrete Gaussian and mean curvature and the six-way local shape
//! classification.
//!
//! Gaussian curvature is the angle deficit over the mixed Voronoi area; mean
//! curvature is half the magnitude of the cotangent Laplacian of the position,
//! signed against the area-weighted vertex normal. With outward normals a
//! sphere seen from outside has `H < 0`; pits and valleys have `H > 0`.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::mesh::{HalfEdgeMesh, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexCurvature {
    /// Gaussian curvature, 1/length^2.
    pub gaussian: f64,
    /// Signed mean curvature, 1/length.
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShapeType {
    Peak,
    Pit,
    Ridge,
    Valley,
    Flat,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ShapeProperty {
    Concave,
    Convex,
    #[default]
    Unspecified,
}

impl ShapeProperty {
    pub fn mirrored(self) -> ShapeProperty {
        match self {
            ShapeProperty::Concave => ShapeProperty::Convex,
            ShapeProperty::Convex => ShapeProperty::Concave,
            ShapeProperty::Unspecified => ShapeProperty::Unspecified,
        }
    }
}

/// Per-vertex curvature; `None` on boundary and isolated vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Curvatures {
    pub values: Vec<Option<VertexCurvature>>,
}

impl Curvatures {
    pub fn get(&self, v: usize) -> Option<VertexCurvature> {
        self.values.get(v).copied().flatten()
    }

    pub fn defined(&self) -> impl Iterator<Item = (usize, VertexCurvature)> + '_ {
        self.values.iter().enumerate().filter_map(|(i, c)| c.map(|c| (i, c)))
    }
}

/// Flatness thresholds for [`classify_shape`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureThresholds {
    pub eps_gaussian: f64,
    pub eps_mean: f64,
}

impl CurvatureThresholds {
    /// Scale-relative defaults for a part whose bounding-box diagonal is `diag`.
    pub fn for_diagonal(diag: f64) -> Self {
        CurvatureThresholds { eps_gaussian: 1e-4 / (diag * diag), eps_mean: 1e-3 / diag }
    }
}

fn cot(u: &Vector, v: &Vector) -> f64 {
    let s = u.cross(v).norm();
    if s == 0.0 {
        0.0
    } else {
        u.dot(v) / s
    }
}

pub fn vertex_curvatures(mesh: &HalfEdgeMesh) -> Curvatures {
    let nv = mesh.vertex_count();
    let mut angle_sum = vec![0.0; nv];
    let mut area = vec![0.0; nv];
    let mut laplace = vec![Vector::zeros(); nv];
    let mut normal = vec![Vector::zeros(); nv];
    for (f, tri) in mesh.mesh.faces.iter().enumerate() {
        let p = mesh.mesh.corners(f);
        let tri_area = mesh.mesh.face_area(f);
        let n = mesh.mesh.face_normals[f];
        let mut angles = [0.0; 3];
        let mut cots = [0.0; 3];
        for i in 0..3 {
            let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
            let (u, v) = (b - a, c - a);
            angles[i] = u.angle(&v);
            cots[i] = cot(&u, &v);
        }
        let obtuse = angles.iter().position(|&a| a > PI / 2.0);
        for i in 0..3 {
            let vi = tri[i] as usize;
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            angle_sum[vi] += angles[i];
            normal[vi] += n * tri_area;
            area[vi] += match obtuse {
                None => 0.125 * ((p[j] - p[i]).norm_squared() * cots[k] + (p[k] - p[i]).norm_squared() * cots[j]),
                Some(o) if o == i => tri_area / 2.0,
                Some(_) => tri_area / 4.0,
            };
            // Edge (j, k) is opposite corner i.
            let (vj, vk) = (tri[j] as usize, tri[k] as usize);
            let d = p[k] - p[j];
            laplace[vj] += d * cots[i];
            laplace[vk] -= d * cots[i];
        }
    }
    let values = (0..nv)
        .map(|v| {
            if mesh.vertex_faces(v).is_empty() || mesh.is_boundary_vertex(v) || area[v] <= 0.0 {
                return None;
            }
            let n = normal[v].try_normalize(0.0)?;
            let gaussian = (2.0 * PI - angle_sum[v]) / area[v];
            let mean = laplace[v].dot(&n) / (4.0 * area[v]);
            Some(VertexCurvature { gaussian, mean })
        })
        .collect();
    Curvatures { values }
}

pub fn classify_shape(c: VertexCurvature, th: CurvatureThresholds) -> ShapeType {
    let (k, h) = (c.gaussian, c.mean);
    if k > th.eps_gaussian {
        if h < 0.0 {
            ShapeType::Peak
        } else {
            ShapeType::Pit
        }
    } else if k < -th.eps_gaussian {
        ShapeType::Saddle
    } else if h < -th.eps_mean {
        ShapeType::Ridge
    } else if h > th.eps_mean {
        ShapeType::Valley
    } else {
        ShapeType::Flat
    }
}

/// Outcome of aggregating vertex shapes over a face set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropertyEstimate {
    pub property: ShapeProperty,
    /// Number of interior vertices that carried a defined curvature.
    pub classified: usize,
}

/// Uniformly concave (pits, valleys) or convex (peaks, ridges) face sets get
/// that property; mixtures, saddles and all-flat sets are unspecified. Only
/// vertices whose whole one-ring lies inside the set are considered.
pub fn feature_shape_property(
    faces: &[usize],
    mesh: &HalfEdgeMesh,
    curvatures: &Curvatures,
    th: CurvatureThresholds,
) -> PropertyEstimate {
    let set: HashSet<usize> = faces.iter().copied().collect();
    let mut verts: Vec<usize> = faces.iter().flat_map(|&f| mesh.mesh.faces[f].iter().map(|&v| v as usize)).collect();
    verts.sort_unstable();
    verts.dedup();
    let (mut concave, mut convex, mut saddle, mut classified) = (0, 0, 0, 0);
    for v in verts {
        if !mesh.vertex_faces(v).iter().all(|f| set.contains(&(*f as usize))) {
            continue;
        }
        let Some(c) = curvatures.get(v) else { continue };
        classified += 1;
        match classify_shape(c, th) {
            ShapeType::Pit | ShapeType::Valley => concave += 1,
            ShapeType::Peak | ShapeType::Ridge => convex += 1,
            ShapeType::Saddle => saddle += 1,
            ShapeType::Flat => {}
        }
    }
    if classified == 0 {
        log::warn!("feature with {} faces has no classified interior vertex", faces.len());
    }
    let property = match (concave, convex, saddle) {
        (c, 0, 0) if c > 0 => ShapeProperty::Concave,
        (0, c, 0) if c > 0 => ShapeProperty::Convex,
        _ => ShapeProperty::Unspecified,
    };
    PropertyEstimate { property, classified }
}

/// Writes `vertex,K,H,shape` rows; undefined vertices are skipped.
pub fn write_curvature_csv(curvatures: &Curvatures, th: CurvatureThresholds, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "vertex,K,H,shape")?;
    for (v, c) in curvatures.defined() {
        writeln!(out, "{v},{:e},{:e},{:?}", c.gaussian, c.mean, classify_shape(c, th))?;
    }
    Ok(())
}
