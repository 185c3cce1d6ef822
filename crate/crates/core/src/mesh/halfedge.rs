use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{MeshError, Point, TriMesh};

pub const NO_TWIN: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfEdge {
    pub origin: u32,
    pub twin: u32,
    pub next: u32,
    pub face: u32,
}

/// Manifold triangle mesh with half-edge connectivity.
///
/// Half-edge `3 * f + i` runs from corner `i` to corner `i + 1` of face `f`.
#[derive(Debug, Clone)]
pub struct HalfEdgeMesh {
    pub mesh: TriMesh,
    pub half_edges: Vec<HalfEdge>,
    /// Half-edges without a twin, in index order.
    pub boundary_half_edges: Vec<u32>,
    vertex_faces: Vec<Vec<u32>>,
    /// Faces dropped because welding collapsed them.
    pub collapsed_faces: usize,
}

impl HalfEdgeMesh {
    pub fn from_mesh(mesh: TriMesh) -> Result<HalfEdgeMesh, MeshError> {
        let nf = mesh.faces.len();
        let mut half_edges = Vec::with_capacity(nf * 3);
        for (f, tri) in mesh.faces.iter().enumerate() {
            for (i, &origin) in tri.iter().enumerate() {
                half_edges.push(HalfEdge {
                    origin,
                    twin: NO_TWIN,
                    next: (3 * f + (i + 1) % 3) as u32,
                    face: f as u32,
                });
            }
        }
        let mut by_edge: HashMap<(u32, u32), Vec<u32>> = HashMap::with_capacity(nf * 3 / 2 + 1);
        for (h, he) in half_edges.iter().enumerate() {
            let dest = half_edges[he.next as usize].origin;
            let key = (he.origin.min(dest), he.origin.max(dest));
            by_edge.entry(key).or_default().push(h as u32);
        }
        let mut non_manifold = Vec::new();
        let mut misoriented = Vec::new();
        let mut keys: Vec<_> = by_edge.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let hs = &by_edge[&key];
            match hs.len() {
                1 => {}
                2 => {
                    let (a, b) = (hs[0] as usize, hs[1] as usize);
                    if half_edges[a].origin == half_edges[b].origin {
                        misoriented.push(key);
                    } else {
                        half_edges[a].twin = b as u32;
                        half_edges[b].twin = a as u32;
                    }
                }
                _ => non_manifold.push(key),
            }
        }
        if !non_manifold.is_empty() {
            return Err(MeshError::NonManifold { edges: non_manifold });
        }
        if !misoriented.is_empty() {
            return Err(MeshError::Orientation { edges: misoriented });
        }
        let boundary_half_edges = (0..half_edges.len() as u32).filter(|&h| half_edges[h as usize].twin == NO_TWIN).collect();
        let mut vertex_faces = vec![Vec::new(); mesh.vertices.len()];
        for (f, tri) in mesh.faces.iter().enumerate() {
            for &v in tri {
                vertex_faces[v as usize].push(f as u32);
            }
        }
        Ok(HalfEdgeMesh { mesh, half_edges, boundary_half_edges, vertex_faces, collapsed_faces: 0 })
    }

    #[inline]
    pub fn he(&self, h: u32) -> &HalfEdge {
        &self.half_edges[h as usize]
    }

    #[inline]
    pub fn dest(&self, h: u32) -> u32 {
        self.half_edges[self.half_edges[h as usize].next as usize].origin
    }

    #[inline]
    pub fn twin(&self, h: u32) -> Option<u32> {
        let t = self.half_edges[h as usize].twin;
        (t != NO_TWIN).then_some(t)
    }

    /// Face across half-edge `h`, if any.
    #[inline]
    pub fn opposite_face(&self, h: u32) -> Option<usize> {
        self.twin(h).map(|t| self.half_edges[t as usize].face as usize)
    }

    pub fn face_neighbors(&self, f: usize) -> [Option<usize>; 3] {
        let b = 3 * f as u32;
        [self.opposite_face(b), self.opposite_face(b + 1), self.opposite_face(b + 2)]
    }

    pub fn vertex_faces(&self, v: usize) -> &[u32] {
        &self.vertex_faces[v]
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.mesh.faces.len()
    }

    pub fn position(&self, v: u32) -> Point {
        self.mesh.vertices[v as usize]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_faces[v].iter().any(|&f| {
            (0..3).any(|i| {
                let h = 3 * f + i;
                self.he(h).twin == NO_TWIN && (self.he(h).origin as usize == v || self.dest(h) as usize == v)
            })
        })
    }

    pub fn edge_count(&self) -> usize {
        let interior = self.half_edges.len() - self.boundary_half_edges.len();
        interior / 2 + self.boundary_half_edges.len()
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        let used = self.vertex_faces.iter().filter(|f| !f.is_empty()).count();
        used as i64 - self.edge_count() as i64 + self.face_count() as i64
    }
}

/// Merges vertices closer than `weld_tol` and builds half-edge connectivity.
///
/// Merging is transitive (union-find); each merged vertex takes the position of
/// its lowest-index member so the result does not depend on hash order.
pub fn weld_and_connect(mesh: &TriMesh, weld_tol: f64) -> Result<HalfEdgeMesh, MeshError> {
    if weld_tol.is_nan() || weld_tol < 0.0 {
        return Err(MeshError::BadTolerance(weld_tol));
    }
    let n = mesh.vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let cell = if weld_tol > 0.0 { weld_tol } else { 1.0 };
    let key = |p: &Point| -> (i64, i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::with_capacity(n);
    for (i, p) in mesh.vertices.iter().enumerate() {
        let (cx, cy, cz) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in list {
                            let close = if weld_tol > 0.0 { (mesh.vertices[j] - p).norm() <= weld_tol } else { mesh.vertices[j] == *p };
                            if close {
                                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                                if ri != rj {
                                    let (lo, hi) = (ri.min(rj), ri.max(rj));
                                    parent[hi] = lo;
                                }
                            }
                        }
                    }
                }
            }
        }
        grid.entry((cx, cy, cz)).or_default().push(i);
    }
    let mut remap = vec![u32::MAX; n];
    let mut vertices = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if remap[r] == u32::MAX {
            remap[r] = vertices.len() as u32;
            vertices.push(mesh.vertices[r]);
        }
        remap[i] = remap[r];
    }
    let faces: Vec<[u32; 3]> = mesh.faces.iter().map(|f| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]]).collect();
    let (welded, collapsed) = TriMesh::from_triangles(vertices, faces)?;
    let welded = compact(welded);
    let mut he = HalfEdgeMesh::from_mesh(welded)?;
    he.collapsed_faces = collapsed;
    Ok(he)
}

fn compact(mesh: TriMesh) -> TriMesh {
    let mut used = vec![u32::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    let mut faces = mesh.faces;
    for f in faces.iter_mut() {
        for v in f.iter_mut() {
            let old = *v as usize;
            if used[old] == u32::MAX {
                used[old] = vertices.len() as u32;
                vertices.push(mesh.vertices[old]);
            }
            *v = used[old];
        }
    }
    TriMesh { vertices, faces, face_normals: mesh.face_normals }
}
