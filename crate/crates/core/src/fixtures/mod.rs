//! Procedural meshes used by tests, the acceptance suite and the `fixture`
//! CLI subcommand.

mod die_decision;
mod scenes;

pub use die_decision::die_decision;
pub use scenes::*;

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Isometry3, Rotation3};

use crate::mesh::{Point, TriMesh, Vector};

/// Indexed triangles before degenerate filtering.
#[derive(Debug, Clone, Default)]
pub struct Soup {
    pub vertices: Vec<Point>,
    pub faces: Vec<[u32; 3]>,
}

impl Soup {
    pub fn into_parts(self) -> (TriMesh, usize) {
        TriMesh::from_triangles(self.vertices, self.faces).expect("fixture mesh is valid")
    }

    pub fn mesh(self) -> TriMesh {
        self.into_parts().0
    }

    pub fn translated(mut self, t: Vector) -> Soup {
        for v in &mut self.vertices {
            *v += t;
        }
        self
    }

    pub fn scaled(mut self, s: f64) -> Soup {
        for v in &mut self.vertices {
            *v = Point::from(v.coords * s);
        }
        self
    }

    pub fn transformed(mut self, iso: &Isometry3<f64>) -> Soup {
        for v in &mut self.vertices {
            *v = iso * *v;
        }
        self
    }

    /// Reverses the winding of every face.
    pub fn flipped(mut self) -> Soup {
        for f in &mut self.faces {
            f.swap(1, 2);
        }
        self
    }

    pub fn append(&mut self, other: &Soup) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(other.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }
}

pub fn cube(size: f64) -> Soup {
    let s = size;
    let vertices = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(s, 0.0, 0.0),
        Point::new(s, s, 0.0),
        Point::new(0.0, s, 0.0),
        Point::new(0.0, 0.0, s),
        Point::new(s, 0.0, s),
        Point::new(s, s, s),
        Point::new(0.0, s, s),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    Soup { vertices, faces }
}

pub fn icosphere(radius: f64, subdivisions: u32) -> Soup {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point::from(Vector::new(x, y, z).normalize()))
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vs: &mut Vec<Point>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = (vs[a as usize].coords + vs[b as usize].coords).normalize();
                vs.push(Point::from(m));
                (vs.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Soup { vertices, faces }.scaled(radius)
}

/// Open cylinder around the z axis, normals pointing outward.
pub fn cylinder(radius: f64, height: f64, segments: usize, rings: usize) -> Soup {
    let mut s = Soup::default();
    for r in 0..=rings {
        let z = height * r as f64 / rings as f64;
        for k in 0..segments {
            let a = 2.0 * PI * k as f64 / segments as f64;
            s.vertices.push(Point::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let idx = |r: usize, k: usize| (r * segments + k % segments) as u32;
    for r in 0..rings {
        for k in 0..segments {
            s.faces.push([idx(r, k), idx(r, k + 1), idx(r + 1, k + 1)]);
            s.faces.push([idx(r, k), idx(r + 1, k + 1), idx(r + 1, k)]);
        }
    }
    s
}

pub fn torus(major: f64, minor: f64, segments: usize, sides: usize) -> Soup {
    let mut s = Soup::default();
    for i in 0..segments {
        let u = 2.0 * PI * i as f64 / segments as f64;
        for j in 0..sides {
            let v = 2.0 * PI * j as f64 / sides as f64;
            let r = major + minor * v.cos();
            s.vertices.push(Point::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % segments) * sides + j % sides) as u32;
    for i in 0..segments {
        for j in 0..sides {
            s.faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            s.faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    s
}

/// Regular grid sampling `z = f(x, y)` over `[x0, x0 + nx*h] x [y0, y0 + ny*h]`.
///
/// Faces are emitted row by row (y outer, x inner), two per cell, normals up.
pub fn heightfield(x0: f64, y0: f64, h: f64, nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Soup {
    let mut s = Soup::default();
    for j in 0..=ny {
        for i in 0..=nx {
            let (x, y) = (x0 + i as f64 * h, y0 + j as f64 * h);
            s.vertices.push(Point::new(x, y, f(x, y)));
        }
    }
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    for j in 0..ny {
        for i in 0..nx {
            s.faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            s.faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    s
}

pub fn flat_grid(size: f64, n: usize) -> Soup {
    heightfield(0.0, 0.0, size / n as f64, n, n, |_, _| 0.0)
}

/// Two planar strips meeting along a chamfer, for material-angle checks.
///
/// The corner line is the x axis. The first strip lies along +y, the second
/// along the direction at `opening` radians from +y (about the x axis). The
/// strips start `chamfer` away from the corner and are joined by a one-face-
/// wide chamfer strip. Normals point into the wedge, so the surface is concave
/// for `opening < PI`; `flipped()` turns it into the convex complement.
pub fn dihedral(opening: f64, chamfer: f64, width: f64, length: f64, segments: usize) -> DihedralFixture {
    let a = Vector::new(0.0, 1.0, 0.0);
    let b = Vector::new(0.0, opening.cos(), opening.sin());
    let mut s = Soup::default();
    let rows = [(a, width), (a, chamfer), (b, chamfer), (b, width)];
    for (dir, dist) in rows {
        for k in 0..=segments {
            let x = length * k as f64 / segments as f64;
            s.vertices.push(Point::from(Vector::new(x, 0.0, 0.0) + dir * dist));
        }
    }
    let n = segments + 1;
    let idx = |r: usize, k: usize| (r * n + k) as u32;
    let mut strip_faces = [Vec::new(), Vec::new(), Vec::new()];
    for (r, faces) in strip_faces.iter_mut().enumerate() {
        for k in 0..segments {
            faces.push(s.faces.len());
            s.faces.push([idx(r, k), idx(r + 1, k), idx(r + 1, k + 1)]);
            faces.push(s.faces.len());
            s.faces.push([idx(r, k), idx(r + 1, k + 1), idx(r, k + 1)]);
        }
    }
    let [first, chamfer_faces, second] = strip_faces;
    // Winding above gives normals pointing away from the wedge interior for
    // the first strip; flip so the wedge interior is the air side.
    let mut fixture = DihedralFixture { soup: s, first, chamfer: chamfer_faces, second };
    let probe = fixture.soup.clone().mesh();
    let n0 = probe.face_normals[fixture.first[0]];
    let inward = b - a * b.dot(&a);
    if n0.dot(&inward) < 0.0 {
        fixture.soup = fixture.soup.flipped();
    }
    fixture
}

#[derive(Debug, Clone)]
pub struct DihedralFixture {
    pub soup: Soup,
    pub first: Vec<usize>,
    pub chamfer: Vec<usize>,
    pub second: Vec<usize>,
}

impl DihedralFixture {
    pub fn transformed(mut self, iso: &Isometry3<f64>) -> Self {
        self.soup = self.soup.transformed(iso);
        self
    }

    pub fn flipped(mut self) -> Self {
        self.soup = self.soup.flipped();
        self
    }
}

/// Rotation taking `from` onto `to` (both unit).
pub fn rotation_between(from: &Vector, to: &Vector) -> Rotation3<f64> {
    Rotation3::rotation_between(from, to).unwrap_or_else(|| {
        let axis = if from.x.abs() < 0.9 { Vector::x() } else { Vector::y() };
        Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(from.cross(&axis)), PI)
    })
}
