//! Triangle meshes: STL loading, vertex welding and half-edge connectivity.

mod halfedge;
mod stl;

pub use halfedge::{weld_and_connect, HalfEdge, HalfEdgeMesh, NO_TWIN};
pub use stl::{load_stl, write_stl_ascii, write_stl_binary, StlLoad};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("STL parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("mesh has no non-degenerate faces")]
    Empty,
    #[error("face {face} references vertex {vertex} but the mesh has {count} vertices")]
    BadIndex { face: usize, vertex: u32, count: usize },
    #[error("non-manifold edges: {}", format_edges(.edges))]
    NonManifold { edges: Vec<(u32, u32)> },
    #[error("inconsistently oriented faces across edges: {}", format_edges(.edges))]
    Orientation { edges: Vec<(u32, u32)> },
    #[error("weld tolerance must be non-negative, got {0}")]
    BadTolerance(f64),
}

fn format_edges(edges: &[(u32, u32)]) -> String {
    let shown: Vec<String> = edges.iter().take(16).map(|(a, b)| format!("{a}-{b}")).collect();
    if edges.len() > 16 {
        format!("{} (+{} more)", shown.join(", "), edges.len() - 16)
    } else {
        shown.join(", ")
    }
}

/// Indexed triangle mesh with per-face unit normals derived from winding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<[u32; 3]>,
    pub face_normals: Vec<Vector>,
}

impl TriMesh {
    /// Builds a mesh from raw vertices and faces, dropping degenerate faces.
    ///
    /// Returns the mesh and the number of faces dropped.
    pub fn from_triangles(vertices: Vec<Point>, faces: Vec<[u32; 3]>) -> Result<(TriMesh, usize), MeshError> {
        let n = vertices.len();
        let mut kept = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut dropped = 0;
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v as usize >= n {
                    return Err(MeshError::BadIndex { face: fi, vertex: v, count: n });
                }
            }
            match triangle_normal(&vertices[f[0] as usize], &vertices[f[1] as usize], &vertices[f[2] as usize]) {
                Some(nrm) if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] => {
                    kept.push(*f);
                    normals.push(nrm);
                }
                _ => dropped += 1,
            }
        }
        if kept.is_empty() {
            return Err(MeshError::Empty);
        }
        Ok((TriMesh { vertices, faces: kept, face_normals: normals }, dropped))
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn corners(&self, face: usize) -> [Point; 3] {
        let f = self.faces[face];
        [self.vertices[f[0] as usize], self.vertices[f[1] as usize], self.vertices[f[2] as usize]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.corners(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_centroid(&self, face: usize) -> Point {
        let [a, b, c] = self.corners(face);
        Point::from((a.coords + b.coords + c.coords) / 3.0)
    }

    pub fn bounding_box(&self) -> Aabb {
        bounding_box(self)
    }
}

/// Unit normal by the right-hand rule, or `None` for a zero-area triangle.
pub fn triangle_normal(a: &Point, b: &Point, c: &Point) -> Option<Vector> {
    let cross = (b - a).cross(&(c - a));
    let norm = cross.norm();
    let scale = (b - a).norm_squared().max((c - a).norm_squared()).max((c - b).norm_squared());
    if !norm.is_finite() || norm <= 1e-14 * scale || norm == 0.0 {
        None
    } else {
        Some(cross / norm)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn extent(&self) -> Vector {
        self.max - self.min
    }
}

pub fn bounding_box(mesh: &TriMesh) -> Aabb {
    let mut min = Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in &mesh.vertices {
        for k in 0..3 {
            min[k] = min[k].min(v[k]);
            max[k] = max[k].max(v[k]);
        }
    }
    Aabb { min, max }
}


/// Relative weld tolerance applied to the bounding-box diagonal.
pub const DEFAULT_WELD_FACTOR: f64 = 1e-5;

/// What happened while turning raw STL bytes into a connected mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub faces: usize,
    pub boundary_edges: usize,
    pub dropped_degenerate: usize,
    pub collapsed_faces: usize,
    pub weld_tol: f64,
    pub bounding_box: Aabb,
}

impl MeshSummary {
    pub fn new(mesh: &HalfEdgeMesh, dropped_degenerate: usize, weld_tol: f64) -> Self {
        MeshSummary {
            vertices: mesh.vertex_count(),
            faces: mesh.face_count(),
            boundary_edges: mesh.boundary_half_edges.len(),
            dropped_degenerate,
            collapsed_faces: mesh.collapsed_faces,
            weld_tol,
            bounding_box: mesh.mesh.bounding_box(),
        }
    }
}

/// Parses STL bytes and welds them with `weld_tol`, or with
/// `DEFAULT_WELD_FACTOR` times the diagonal when `None`.
pub fn prepare_stl(bytes: &[u8], weld_tol: Option<f64>) -> Result<(HalfEdgeMesh, MeshSummary), MeshError> {
    let load = load_stl(bytes)?;
    let tol = weld_tol.unwrap_or_else(|| DEFAULT_WELD_FACTOR * load.mesh.bounding_box().diagonal());
    let mesh = weld_and_connect(&load.mesh, tol)?;
    let summary = MeshSummary::new(&mesh, load.dropped_degenerate, tol);
    Ok((mesh, summary))
}
