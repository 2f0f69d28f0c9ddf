use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::IngestError;

/// Indexed triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

/// The affine map applied by [`load_and_normalize`]: `p' = (p - center) * scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub center: Point3<f64>,
    pub scale: f64,
}

/// Half-extent of the longest bounding box axis after normalization.
pub const NORMALIZED_HALF_EXTENT: f64 = 0.8;

impl TriMesh {
    /// Validates indices and drops triangles with area below 1e-14.
    /// Returns the mesh and the number of dropped triangles.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<(Self, usize), IngestError> {
        let n = vertices.len() as u32;
        if let Some(tri) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(IngestError::IndexOutOfRange { index: *tri.iter().max().unwrap(), vertices: n as usize });
        }
        if vertices.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(IngestError::NonFinite);
        }
        let before = triangles.len();
        let triangles: Vec<_> = triangles
            .into_iter()
            .filter(|t| triangle_area(&vertices, t) >= 1e-14)
            .collect();
        let dropped = before - triangles.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangles");
        }
        Ok((Self { vertices, triangles, normals: None }, dropped))
    }

    /// Builds a mesh that is already known to be valid.
    pub fn from_raw(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Self {
        Self { vertices, triangles, normals: None }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, tri: usize) -> [Point3<f64>; 3] {
        self.triangles[tri].map(|i| self.vertices[i as usize])
    }

    /// Unit face normal (counter-clockwise winding).
    pub fn face_normal(&self, tri: usize) -> Vector3<f64> {
        let [a, b, c] = self.corners(tri);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, tri: usize) -> f64 {
        triangle_area(&self.vertices, &self.triangles[tri])
    }

    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        !counts.is_empty() && counts.values().all(|&c| c == 2)
    }

    /// No directed edge occurs twice, so adjacent faces agree on orientation.
    pub fn is_consistently_oriented(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.triangles
            .iter()
            .all(|t| (0..3).all(|k| seen.insert((t[k], t[(k + 1) % 3]))))
    }

    /// Applies `p -> (p - center) * scale` to every vertex.
    pub fn transformed(&self, n: &Normalization) -> Self {
        let vertices = self.vertices.iter().map(|p| Point3::from((p - n.center) * n.scale)).collect();
        Self { vertices, triangles: self.triangles.clone(), normals: self.normals.clone() }
    }

    /// Parses Wavefront OBJ: `v` and `f` records (polygons fan-triangulated);
    /// `vn` normals are kept only when they map one-to-one onto vertices.
    pub fn read_obj<R: BufRead>(reader: R) -> Result<Self, IngestError> {
        let mut vertices = Vec::new();
        let mut normals = Vec::new();
        let mut triangles = Vec::new();
        let mut vertex_normal: HashMap<u32, u32> = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let mut it = line.split_whitespace();
            let bad = |msg: &str| IngestError::Obj { line: lineno + 1, message: msg.to_string() };
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it.take(3).map(|s| s.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad("bad vertex"))?;
                    if c.len() != 3 {
                        return Err(bad("vertex needs 3 coordinates"));
                    }
                    vertices.push(Point3::new(c[0], c[1], c[2]));
                }
                Some("vn") => {
                    let c: Vec<f64> = it.take(3).map(|s| s.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad("bad normal"))?;
                    if c.len() != 3 {
                        return Err(bad("normal needs 3 coordinates"));
                    }
                    normals.push(Vector3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for tok in it {
                        let mut parts = tok.split('/');
                        let v = resolve_index(parts.next(), vertices.len()).ok_or_else(|| bad("bad face index"))?;
                        let _vt = parts.next();
                        if let Some(n) = parts.next().filter(|s| !s.is_empty()) {
                            let n = resolve_index(Some(n), normals.len()).ok_or_else(|| bad("bad normal index"))?;
                            vertex_normal.insert(v, n);
                        }
                        idx.push(v);
                    }
                    if idx.len() < 3 {
                        return Err(bad("face needs at least 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        let (mut mesh, _) = Self::new(vertices, triangles)?;
        if !normals.is_empty() && vertex_normal.len() == mesh.vertices.len() {
            let n = (0..mesh.vertices.len() as u32).map(|i| normals[vertex_normal[&i] as usize]).collect();
            mesh.normals = Some(n);
        } else if normals.len() == mesh.vertices.len() && vertex_normal.is_empty() {
            mesh.normals = Some(normals);
        }
        Ok(mesh)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let f = std::fs::File::open(path.as_ref())?;
        Self::read_obj(std::io::BufReader::new(f))
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for p in &self.vertices {
            writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_obj(&mut w)?;
        w.flush()
    }
}

fn resolve_index(tok: Option<&str>, count: usize) -> Option<u32> {
    let i: i64 = tok?.parse().ok()?;
    let resolved = if i < 0 { count as i64 + i } else { i - 1 };
    (resolved >= 0).then_some(resolved as u32)
}

fn triangle_area(vertices: &[Point3<f64>], t: &[u32; 3]) -> f64 {
    let [a, b, c] = t.map(|i| vertices[i as usize]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Centers the bounding box at the origin and scales uniformly so the
/// longest half-extent becomes 0.8.
pub fn load_and_normalize(mesh: &TriMesh) -> Result<(TriMesh, Normalization), IngestError> {
    if mesh.is_empty() {
        return Err(IngestError::EmptyMesh);
    }
    let (lo, hi) = mesh.bounds().ok_or(IngestError::EmptyMesh)?;
    let half = (hi - lo) / 2.0;
    let longest = half.max();
    if longest <= 1e-12 {
        return Err(IngestError::ZeroExtent);
    }
    let n = Normalization { center: Point3::from((lo.coords + hi.coords) / 2.0), scale: NORMALIZED_HALF_EXTENT / longest };
    Ok((mesh.transformed(&n), n))
}
