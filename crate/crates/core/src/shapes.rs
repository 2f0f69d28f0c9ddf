//! Procedural shapes with known geometry: meshes, analytic signed distances,
//! and cylinder layouts that enclose them.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::geometry::{CurveSpec, GeneralizedCylinder, KeyFrame};
use crate::ingest::TriMesh;

/// Axis-aligned box centered at `center`.
pub fn box_mesh(center: Point3<f64>, half: Vector3<f64>) -> TriMesh {
    let mut v = Vec::with_capacity(8);
    for i in 0..8 {
        let s = Vector3::new(
            if i & 1 == 0 { -1.0 } else { 1.0 },
            if i & 2 == 0 { -1.0 } else { 1.0 },
            if i & 4 == 0 { -1.0 } else { 1.0 },
        );
        v.push(center + half.component_mul(&s));
    }
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let tris = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriMesh::from_raw(v, tris)
}

/// Surface of revolution about the x axis through `profile` points `(x, rho)`.
/// Profile endpoints with `rho == 0` become poles.
pub fn revolve(profile: &[(f64, f64)], slices: usize) -> TriMesh {
    let mut vertices = Vec::new();
    let mut rings: Vec<Vec<u32>> = Vec::new();
    for &(x, rho) in profile {
        if rho == 0.0 {
            vertices.push(Point3::new(x, 0.0, 0.0));
            rings.push(vec![vertices.len() as u32 - 1]);
        } else {
            let ring = (0..slices)
                .map(|j| {
                    let a = std::f64::consts::TAU * j as f64 / slices as f64;
                    vertices.push(Point3::new(x, rho * a.cos(), rho * a.sin()));
                    vertices.len() as u32 - 1
                })
                .collect();
            rings.push(ring);
        }
    }
    let mut tris = Vec::new();
    for w in rings.windows(2) {
        let (r0, r1) = (&w[0], &w[1]);
        for j in 0..slices {
            let j1 = (j + 1) % slices;
            match (r0.len(), r1.len()) {
                (1, _) => tris.push([r0[0], r1[j1], r1[j]]),
                (_, 1) => tris.push([r0[j], r0[j1], r1[0]]),
                _ => {
                    tris.push([r0[j], r0[j1], r1[j1]]);
                    tris.push([r0[j], r1[j1], r1[j]]);
                }
            }
        }
    }
    TriMesh::from_raw(vertices, tris)
}

/// Capsule along x: segment `[-half_length, half_length]`, radius `radius`.
pub fn capsule_mesh(half_length: f64, radius: f64, rings: usize, slices: usize) -> TriMesh {
    let mut profile = vec![(-half_length - radius, 0.0)];
    for i in 1..=rings {
        let a = std::f64::consts::FRAC_PI_2 * i as f64 / rings as f64;
        profile.push((-half_length - radius * a.cos(), radius * a.sin()));
    }
    for i in (0..rings).rev() {
        let a = std::f64::consts::FRAC_PI_2 * i as f64 / rings as f64;
        profile.push((half_length + radius * a.cos(), radius * a.sin()));
    }
    revolve(&profile, slices)
}

/// Closed cylinder along x from `x0` to `x1`.
pub fn cylinder_mesh(x0: f64, x1: f64, radius: f64, stacks: usize, slices: usize) -> TriMesh {
    let mut profile = vec![(x0, 0.0)];
    for i in 0..=stacks {
        profile.push((x0 + (x1 - x0) * i as f64 / stacks as f64, radius));
    }
    profile.push((x1, 0.0));
    revolve(&profile, slices)
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(center: Point3<f64>, radius: f64, subdivisions: usize) -> TriMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0), (1.0, phi, 0.0), (-1.0, -phi, 0.0), (1.0, -phi, 0.0),
        (0.0, -1.0, phi), (0.0, 1.0, phi), (0.0, -1.0, -phi), (0.0, 1.0, -phi),
        (phi, 0.0, -1.0), (phi, 0.0, 1.0), (-phi, 0.0, -1.0), (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push((verts[a as usize] + verts[b as usize]).normalize());
                verts.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    TriMesh::from_raw(verts.into_iter().map(|v| center + v * radius).collect(), tris)
}

pub fn sphere_sdf(p: &Point3<f64>, center: &Point3<f64>, radius: f64) -> f64 {
    (p - center).norm() - radius
}

/// Signed distance to the capsule produced by [`capsule_mesh`].
pub fn capsule_sdf(p: &Point3<f64>, half_length: f64, radius: f64) -> f64 {
    let x = p.x.clamp(-half_length, half_length);
    (p - Point3::new(x, 0.0, 0.0)).norm() - radius
}

/// A straight cylinder along x from `x0` to `x1` with constant radius and
/// identity frames.
pub fn straight_gc(x0: f64, x1: f64, radius: f64) -> GeneralizedCylinder {
    let spec = CurveSpec::line(Point3::new(x0, 0.0, 0.0), Point3::new(x1, 0.0, 0.0));
    GeneralizedCylinder::new(spec, vec![KeyFrame::identity(0.0, radius, radius), KeyFrame::identity(1.0, radius, radius)])
        .expect("valid straight cylinder")
}

/// One cylinder enclosing the capsule `(half_length, radius)` with the
/// usual 1.1 radius padding; the curve extends past both caps.
pub fn capsule_gc(half_length: f64, radius: f64) -> GeneralizedCylinder {
    let reach = half_length + radius * 1.1;
    straight_gc(-reach, reach, radius * 1.1)
}
