//! Marching Cubes with a case table derived from face rules at first use.
//!
//! On every cube face the inside corners are cut off individually, so two
//! diagonal inside corners on a face are always separated. Both cubes sharing
//! a face apply the same rule to the same four values, which keeps the output
//! watertight. Face segments are chained into loops and each loop is fanned.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{Point3, Vector3};

use super::GridSpec;
use crate::ingest::TriMesh;

/// Corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// The 12 cube edges as `(lower corner, upper corner)`.
pub(crate) fn cube_edges() -> [(usize, usize); 12] {
    let mut out = [(0, 0); 12];
    let mut k = 0;
    for a in 0..8 {
        for bit in 0..3 {
            if a & (1 << bit) == 0 {
                out[k] = (a, a | (1 << bit));
                k += 1;
            }
        }
    }
    out
}

/// Faces as corner cycles, counter-clockwise seen from outside the cube.
fn cube_faces() -> Vec<[usize; 4]> {
    let mut faces = Vec::new();
    for axis in 0..3 {
        for side in 0..2 {
            let mut corners: Vec<usize> = (0..8).filter(|&c| corner_offset(c)[axis] == side).collect();
            let pos = |c: usize| {
                let o = corner_offset(c);
                Vector3::new(o[0] as f64 - 0.5, o[1] as f64 - 0.5, o[2] as f64 - 0.5)
            };
            let mut normal = Vector3::zeros();
            normal[axis] = if side == 0 { -1.0 } else { 1.0 };
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            corners.sort_by(|&a, &b| {
                let (pa, pb) = (pos(a), pos(b));
                pa[v].atan2(pa[u]).partial_cmp(&pb[v].atan2(pb[u])).unwrap()
            });
            let turn = (pos(corners[1]) - pos(corners[0])).cross(&(pos(corners[2]) - pos(corners[1])));
            if turn.dot(&normal) < 0.0 {
                corners.reverse();
            }
            faces.push([corners[0], corners[1], corners[2], corners[3]]);
        }
    }
    faces
}

fn edge_index(edges: &[(usize, usize); 12], a: usize, b: usize) -> usize {
    let key = (a.min(b), a.max(b));
    edges.iter().position(|&e| e == key).expect("adjacent corners")
}

/// Triangles (as edge triples) for one inside-corner mask.
fn build_case(mask: usize, edges: &[(usize, usize); 12], faces: &[[usize; 4]]) -> Vec<[u8; 3]> {
    let inside = |c: usize| mask & (1 << c) != 0;
    let mut next: HashMap<usize, usize> = HashMap::new();
    for f in faces {
        let crossing = |k: usize| (f[k], f[(k + 1) % 4]);
        let mut enters = Vec::new();
        let mut exits = Vec::new();
        for k in 0..4 {
            let (a, b) = crossing(k);
            match (inside(a), inside(b)) {
                (false, true) => enters.push(k),
                (true, false) => exits.push(k),
                _ => {}
            }
        }
        // each run of inside corners spans from its entering edge to the next exiting edge
        for &k in &enters {
            let exit = (1..=4).map(|d| (k + d) % 4).find(|j| exits.contains(j)).expect("runs close");
            let (a, b) = crossing(k);
            let (c, d) = crossing(exit);
            next.insert(edge_index(edges, a, b), edge_index(edges, c, d));
        }
    }
    let mut tris = Vec::new();
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut used = [false; 12];
    for s in starts {
        if used[s] {
            continue;
        }
        let mut lp = vec![s];
        used[s] = true;
        let mut e = next[&s];
        while e != s {
            used[e] = true;
            lp.push(e);
            e = next[&e];
        }
        for i in 1..lp.len() - 1 {
            tris.push([lp[0] as u8, lp[i] as u8, lp[i + 1] as u8]);
        }
    }
    tris
}

pub(crate) fn case_table() -> &'static Vec<Vec<[u8; 3]>> {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let edges = cube_edges();
        let faces = cube_faces();
        (0..256).map(|mask| build_case(mask, &edges, &faces)).collect()
    })
}

/// Isosurface at level 0 of grid-sampled `values` (x fastest, then y, then
/// z). Negative values are inside; triangles face the positive side.
/// Vertices are shared between cells through their grid-edge key.
pub fn marching_cubes(grid: &GridSpec, values: &[f64]) -> TriMesh {
    let n = grid.resolution;
    assert_eq!(values.len(), n * n * n, "one value per grid point");
    let table = case_table();
    let edges = cube_edges();
    let index = |i: usize, j: usize, k: usize| i + n * (j + n * k);
    let mut vertex_of: HashMap<(usize, u8), u32> = HashMap::new();
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles = Vec::new();
    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let corner = |c: usize| {
                    let o = corner_offset(c);
                    index(i + o[0], j + o[1], k + o[2])
                };
                let mut mask = 0;
                for c in 0..8 {
                    if values[corner(c)] < 0.0 {
                        mask |= 1 << c;
                    }
                }
                let cases = &table[mask];
                if cases.is_empty() {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for tri in cases {
                    let mut ids = [0u32; 3];
                    for (slot, &e) in tri.iter().enumerate() {
                        let e = e as usize;
                        if local[e] == u32::MAX {
                            let (a, b) = edges[e];
                            let (ga, gb) = (corner(a), corner(b));
                            let axis = (a ^ b).trailing_zeros() as u8;
                            local[e] = *vertex_of.entry((ga, axis)).or_insert_with(|| {
                                let (va, vb) = (values[ga], values[gb]);
                                let s = va / (va - vb);
                                let (pa, pb) = (grid.point_at_index(ga), grid.point_at_index(gb));
                                vertices.push(pa + (pb - pa) * s);
                                vertices.len() as u32 - 1
                            });
                        }
                        ids[slot] = local[e];
                    }
                    triangles.push(ids);
                }
            }
        }
    }
    TriMesh::from_raw(vertices, triangles)
}
