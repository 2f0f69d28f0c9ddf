//! Closest-point and signed distance queries against a triangle mesh.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::TriMesh;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Point3<f64>,
    hi: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self { lo: Point3::from([f64::INFINITY; 3]), hi: Point3::from([f64::NEG_INFINITY; 3]) }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn dist2(&self, p: &Point3<f64>) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = (self.lo[k] - p[k]).max(0.0).max(p[k] - self.hi[k]);
            d += v * v;
        }
        d
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Which part of a triangle a closest point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    Face,
    /// Edge from corner `k` to corner `(k + 1) % 3`.
    Edge(usize),
    Vertex(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct ClosestPoint {
    pub point: Point3<f64>,
    pub triangle: usize,
    pub feature: Feature,
    pub distance: f64,
}

/// A mesh with a bounding volume hierarchy and angle-weighted pseudonormals.
///
/// Immutable after construction and safe to share between threads.
pub struct MeshQuery {
    mesh: TriMesh,
    nodes: Vec<Node>,
    order: Vec<usize>,
    face_normals: Vec<Vector3<f64>>,
    vertex_normals: Vec<Vector3<f64>>,
    edge_normals: HashMap<(u32, u32), Vector3<f64>>,
    closed: bool,
}

const LEAF_SIZE: usize = 4;

impl MeshQuery {
    pub fn new(mesh: TriMesh) -> Self {
        let n = mesh.triangles.len();
        let centroids: Vec<Point3<f64>> = (0..n)
            .map(|i| {
                let [a, b, c] = mesh.corners(i);
                Point3::from((a.coords + b.coords + c.coords) / 3.0)
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        if n > 0 {
            build(&mesh, &centroids, &mut order, 0, n, &mut nodes);
        }

        let face_normals: Vec<Vector3<f64>> = (0..n).map(|i| mesh.face_normal(i)).collect();
        let mut vertex_normals = vec![Vector3::zeros(); mesh.vertices.len()];
        let mut edge_normals: HashMap<(u32, u32), Vector3<f64>> = HashMap::new();
        for (i, tri) in mesh.triangles.iter().enumerate() {
            let p = mesh.corners(i);
            for k in 0..3 {
                let e1 = (p[(k + 1) % 3] - p[k]).normalize();
                let e2 = (p[(k + 2) % 3] - p[k]).normalize();
                let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
                vertex_normals[tri[k] as usize] += face_normals[i] * angle;
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_normals.entry((a.min(b), a.max(b))).or_insert_with(Vector3::zeros) += face_normals[i];
            }
        }
        let closed = mesh.is_closed();
        Self { mesh, nodes, order, face_normals, vertex_normals, edge_normals, closed }
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn closest_point(&self, q: &Point3<f64>) -> Option<ClosestPoint> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<ClosestPoint> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.bounds().dist2(q) >= best_d2 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &tri in &self.order[start..end] {
                        let [a, b, c] = self.mesh.corners(tri);
                        let (p, feature) = closest_on_triangle(q, &a, &b, &c);
                        let d2 = (q - p).norm_squared();
                        if d2 < best_d2 {
                            best_d2 = d2;
                            best = Some(ClosestPoint { point: p, triangle: tri, feature, distance: 0.0 });
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let (dl, dr) = (self.nodes[left].bounds().dist2(q), self.nodes[right].bounds().dist2(q));
                    // visit the nearer child first
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.map(|mut c| {
            c.distance = best_d2.sqrt();
            c
        })
    }

    pub fn unsigned_distance(&self, q: &Point3<f64>) -> f64 {
        self.closest_point(q).map_or(f64::INFINITY, |c| c.distance)
    }

    /// Signed distance, negative inside. Closed meshes use the pseudonormal
    /// of the closest feature; open meshes and near-tangent configurations
    /// fall back to the generalized winding number.
    pub fn signed_distance(&self, q: &Point3<f64>) -> f64 {
        let Some(c) = self.closest_point(q) else {
            return f64::INFINITY;
        };
        if c.distance == 0.0 {
            return 0.0;
        }
        if self.closed {
            let n = self.pseudonormal(&c);
            let off = q - c.point;
            let dot = off.dot(&n);
            if dot.abs() > 1e-10 * off.norm() * n.norm() {
                return if dot < 0.0 { -c.distance } else { c.distance };
            }
        }
        if self.winding_number(q) >= 0.5 {
            -c.distance
        } else {
            c.distance
        }
    }

    fn pseudonormal(&self, c: &ClosestPoint) -> Vector3<f64> {
        let tri = self.mesh.triangles[c.triangle];
        match c.feature {
            Feature::Face => self.face_normals[c.triangle],
            Feature::Vertex(k) => self.vertex_normals[tri[k] as usize],
            Feature::Edge(k) => {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                self.edge_normals[&(a.min(b), a.max(b))]
            }
        }
    }

    /// Generalized winding number: summed signed solid angles over 4π.
    pub fn winding_number(&self, q: &Point3<f64>) -> f64 {
        let mut total = 0.0;
        for i in 0..self.mesh.triangles.len() {
            let [a, b, c] = self.mesh.corners(i);
            let (a, b, c) = (a - q, b - q, c - q);
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            total += 2.0 * num.atan2(den);
        }
        total / (4.0 * std::f64::consts::PI)
    }
}

fn build(mesh: &TriMesh, centroids: &[Point3<f64>], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let mut bounds = Aabb::empty();
    for &t in &order[start..end] {
        for p in mesh.corners(t) {
            bounds.grow(&p);
        }
    }
    let idx = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return idx;
    }
    let mut cb = Aabb::empty();
    for &t in &order[start..end] {
        cb.grow(&centroids[t]);
    }
    let ext = cb.hi - cb.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z { 0 } else if ext.y >= ext.z { 1 } else { 2 };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]));
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build(mesh, centroids, order, start, mid, nodes);
    let right = build(mesh, centroids, order, mid, end, nodes);
    nodes[idx] = Node::Inner { bounds, left, right };
    idx
}

/// Closest point on triangle `abc` to `p` (Voronoi region classification).
pub fn closest_on_triangle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> (Point3<f64>, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere_query() -> MeshQuery {
        MeshQuery::new(shapes::icosphere(Point3::origin(), 1.0, 5))
    }

    #[test]
    fn sphere_inside_and_outside() {
        let q = sphere_query();
        let inner = q.signed_distance(&Point3::new(0.3, 0.0, 0.0));
        let outer = q.signed_distance(&Point3::new(0.0, 1.5, 0.0));
        assert!((inner + 0.7).abs() < 2e-3, "{inner}");
        assert!((outer - 0.5).abs() < 2e-3, "{outer}");
        let v = q.mesh().vertices[17];
        assert!(q.signed_distance(&v).abs() < 1e-9);
    }

    #[test]
    fn closest_point_matches_brute_force() {
        let q = MeshQuery::new(shapes::capsule_mesh(0.3, 0.2, 6, 12));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let p = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let brute = (0..q.mesh().triangles.len())
                .map(|i| {
                    let [a, b, c] = q.mesh().corners(i);
                    (p - closest_on_triangle(&p, &a, &b, &c).0).norm()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((q.unsigned_distance(&p) - brute).abs() < 1e-12);
        }
    }

    /// Counts crossings of the ray from `p` along `dir` (Moller-Trumbore).
    fn ray_parity(mesh: &TriMesh, p: &Point3<f64>, dir: &Vector3<f64>) -> bool {
        let mut hits = 0;
        for i in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.corners(i);
            let (e1, e2) = (b - a, c - a);
            let h = dir.cross(&e2);
            let det = e1.dot(&h);
            if det.abs() < 1e-14 {
                continue;
            }
            let s = p - a;
            let u = s.dot(&h) / det;
            let qv = s.cross(&e1);
            let v = dir.dot(&qv) / det;
            let t = e2.dot(&qv) / det;
            if u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0 {
                hits += 1;
            }
        }
        hits % 2 == 1
    }

    #[test]
    fn sign_agrees_with_ray_parity() {
        let mesh = shapes::capsule_mesh(0.4, 0.25, 10, 20);
        let q = MeshQuery::new(mesh.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dir = Vector3::new(0.3123, 0.8121, 0.4931).normalize();
        for _ in 0..1000 {
            let p = Point3::new(rng.random_range(-0.8..0.8), rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
            let sd = q.signed_distance(&p);
            if sd.abs() < 1e-9 {
                continue;
            }
            assert_eq!(sd < 0.0, ray_parity(&mesh, &p, &dir), "{p:?} {sd}");
        }
    }

    #[test]
    fn open_mesh_uses_winding_number() {
        let mut m = shapes::icosphere(Point3::origin(), 1.0, 3);
        m.triangles.pop();
        let q = MeshQuery::new(m);
        assert!(!q.is_closed());
        assert!(q.signed_distance(&Point3::new(0.1, 0.0, 0.0)) < 0.0);
        assert!(q.signed_distance(&Point3::new(0.0, 0.0, 2.0)) > 0.0);
    }
}
