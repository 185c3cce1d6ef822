use std::io::Write;

use super::{MeshError, Point, TriMesh};

/// Result of reading an STL stream.
#[derive(Debug, Clone)]
pub struct StlLoad {
    pub mesh: TriMesh,
    /// Zero-area facets removed while loading.
    pub dropped_degenerate: usize,
}

/// Reads binary or ASCII STL. Facet normals stored in the file are ignored and
/// recomputed from the vertex winding.
pub fn load_stl(bytes: &[u8]) -> Result<StlLoad, MeshError> {
    let triangles = if looks_ascii(bytes) { parse_ascii(bytes)? } else { parse_binary(bytes)? };
    if triangles.is_empty() {
        return Err(MeshError::Empty);
    }
    let mut vertices = Vec::with_capacity(triangles.len() * 3);
    let mut faces = Vec::with_capacity(triangles.len());
    for tri in triangles {
        let base = vertices.len() as u32;
        vertices.extend_from_slice(&tri);
        faces.push([base, base + 1, base + 2]);
    }
    let (mesh, dropped) = TriMesh::from_triangles(vertices, faces)?;
    if dropped > 0 {
        log::warn!("dropped {dropped} degenerate facet(s) while loading STL");
    }
    Ok(StlLoad { mesh, dropped_degenerate: dropped })
}

fn looks_ascii(bytes: &[u8]) -> bool {
    let trimmed = skip_ws(bytes, 0);
    if !bytes[trimmed..].starts_with(b"solid") {
        return false;
    }
    // Binary files may also start with "solid"; trust the record count when it fits exactly.
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if 84 + n * 50 == bytes.len() {
            return false;
        }
    }
    true
}

fn skip_ws(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    i
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<[Point; 3]>, MeshError> {
    if bytes.len() < 84 {
        return Err(MeshError::Parse { offset: bytes.len(), message: "truncated header (need 84 bytes)".into() });
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    let need = 84 + n * 50;
    if bytes.len() < need {
        let record = (bytes.len() - 84) / 50;
        return Err(MeshError::Parse {
            offset: 84 + record * 50,
            message: format!("truncated facet record {record} of {n}"),
        });
    }
    let read_f32 = |off: usize| f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]) as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let rec = 84 + i * 50;
        let mut tri = [Point::origin(); 3];
        for (k, p) in tri.iter_mut().enumerate() {
            let off = rec + 12 + k * 12;
            *p = Point::new(read_f32(off), read_f32(off + 4), read_f32(off + 8));
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(MeshError::Parse { offset: off, message: "non-finite vertex coordinate".into() });
            }
        }
        out.push(tri);
    }
    Ok(out)
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.pos = skip_ws(self.bytes, self.pos);
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok().map(|s| (start, s))
    }

    fn skip_line(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
            self.pos += 1;
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), MeshError> {
        match self.next() {
            Some((_, w)) if w.eq_ignore_ascii_case(word) => Ok(()),
            Some((off, w)) => Err(MeshError::Parse { offset: off, message: format!("expected '{word}', found '{w}'") }),
            None => Err(MeshError::Parse { offset: self.bytes.len(), message: format!("expected '{word}', found end of input") }),
        }
    }

    fn number(&mut self) -> Result<f64, MeshError> {
        match self.next() {
            Some((off, w)) => w
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| MeshError::Parse { offset: off, message: format!("invalid number '{w}'") }),
            None => Err(MeshError::Parse { offset: self.bytes.len(), message: "expected number".into() }),
        }
    }
}

fn parse_ascii(bytes: &[u8]) -> Result<Vec<[Point; 3]>, MeshError> {
    let mut t = Tokens { bytes, pos: 0 };
    t.expect("solid")?;
    t.skip_line();
    let mut out = Vec::new();
    loop {
        match t.next() {
            Some((_, w)) if w.eq_ignore_ascii_case("endsolid") => break,
            Some((_, w)) if w.eq_ignore_ascii_case("facet") => {
                t.expect("normal")?;
                for _ in 0..3 {
                    t.number()?;
                }
                t.expect("outer")?;
                t.expect("loop")?;
                let mut tri = [Point::origin(); 3];
                for p in tri.iter_mut() {
                    t.expect("vertex")?;
                    *p = Point::new(t.number()?, t.number()?, t.number()?);
                }
                t.expect("endloop")?;
                t.expect("endfacet")?;
                out.push(tri);
            }
            Some((off, w)) => {
                return Err(MeshError::Parse { offset: off, message: format!("expected 'facet' or 'endsolid', found '{w}'") })
            }
            None => return Err(MeshError::Parse { offset: bytes.len(), message: "missing 'endsolid'".into() }),
        }
    }
    Ok(out)
}

pub fn write_stl_binary(mesh: &TriMesh, out: &mut impl Write) -> std::io::Result<()> {
    let mut header = [0u8; 80];
    let tag = b"topocam binary STL";
    header[..tag.len()].copy_from_slice(tag);
    out.write_all(&header)?;
    out.write_all(&(mesh.faces.len() as u32).to_le_bytes())?;
    for (fi, n) in mesh.face_normals.iter().enumerate() {
        for k in 0..3 {
            out.write_all(&(n[k] as f32).to_le_bytes())?;
        }
        for p in mesh.corners(fi) {
            for k in 0..3 {
                out.write_all(&(p[k] as f32).to_le_bytes())?;
            }
        }
        out.write_all(&[0u8, 0u8])?;
    }
    Ok(())
}

pub fn write_stl_ascii(mesh: &TriMesh, name: &str, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "solid {name}")?;
    for (fi, n) in mesh.face_normals.iter().enumerate() {
        writeln!(out, "  facet normal {:e} {:e} {:e}", n.x, n.y, n.z)?;
        writeln!(out, "    outer loop")?;
        for p in mesh.corners(fi) {
            writeln!(out, "      vertex {:e} {:e} {:e}", p.x, p.y, p.z)?;
        }
        writeln!(out, "    endloop")?;
        writeln!(out, "  endfacet")?;
    }
    writeln!(out, "endsolid {name}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vector;

    const ONE_TRIANGLE: &str = "solid t\nfacet normal 0 0 0\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\nendloop\nendfacet\nendsolid t\n";

    #[test]
    fn ascii_single_triangle() {
        let load = load_stl(ONE_TRIANGLE.as_bytes()).unwrap();
        assert_eq!(load.mesh.face_count(), 1);
        assert!((load.mesh.face_normals[0] - Vector::z()).norm() < 1e-12);
        assert_eq!(load.dropped_degenerate, 0);
    }

    #[test]
    fn binary_cube_round_trip() {
        let (cube, _) = crate::fixtures::cube(1.0).into_parts();
        let mut bytes = Vec::new();
        write_stl_binary(&cube, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 84 + 12 * 50);
        let load = load_stl(&bytes).unwrap();
        assert_eq!(load.mesh.face_count(), 12);
        let mut distinct: Vec<Vector> = Vec::new();
        for n in &load.mesh.face_normals {
            if !distinct.iter().any(|d| (d - n).norm() < 1e-6) {
                distinct.push(*n);
            }
        }
        assert_eq!(distinct.len(), 6);
    }

    #[test]
    fn binary_starting_with_solid_is_not_ascii() {
        let (cube, _) = crate::fixtures::cube(2.0).into_parts();
        let mut bytes = Vec::new();
        write_stl_binary(&cube, &mut bytes).unwrap();
        bytes[..5].copy_from_slice(b"solid");
        assert_eq!(load_stl(&bytes).unwrap().mesh.face_count(), 12);
    }

    #[test]
    fn zero_area_facet_is_dropped_and_counted() {
        let text = format!(
            "{}facet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 1 1\nvertex 2 2 2\nendloop\nendfacet\nendsolid t\n",
            ONE_TRIANGLE.trim_end_matches("endsolid t\n")
        );
        let load = load_stl(text.as_bytes()).unwrap();
        assert_eq!(load.mesh.face_count(), 1);
        assert_eq!(load.dropped_degenerate, 1);
    }

    #[test]
    fn malformed_ascii_reports_offset() {
        let text = "solid t\nfacet normal 0 0 1\nouter loop\nvertex 0 0 zero\n";
        match load_stl(text.as_bytes()) {
            Err(MeshError::Parse { offset, .. }) => assert_eq!(&text[offset..offset + 4], "zero"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_reports_record_offset() {
        let (cube, _) = crate::fixtures::cube(1.0).into_parts();
        let mut bytes = Vec::new();
        write_stl_binary(&cube, &mut bytes).unwrap();
        bytes[0] = b'x';
        bytes.truncate(84 + 3 * 50 + 10);
        match load_stl(&bytes) {
            Err(MeshError::Parse { offset, .. }) => assert_eq!(offset, 84 + 3 * 50),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_solid_is_an_error() {
        assert!(matches!(load_stl(b"solid empty\nendsolid empty\n"), Err(MeshError::Empty)));
    }

    #[test]
    fn ascii_writer_round_trips() {
        let (cube, _) = crate::fixtures::cube(1.0).into_parts();
        let mut text = Vec::new();
        write_stl_ascii(&cube, "cube", &mut text).unwrap();
        let load = load_stl(&text).unwrap();
        assert_eq!(load.mesh.faces.len(), 12);
    }
}
