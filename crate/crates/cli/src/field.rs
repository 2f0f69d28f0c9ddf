//! Scene fields with per-GC feature blends, and mesh extraction from them.

use std::collections::HashMap;

use nalgebra::Point3;
use ngc_core::edit::{blended_values, BlendSpec};
use ngc_core::extract::{extract_scene_with, GridSpec};
use ngc_core::geometry::RelativeCoords;
use ngc_core::ingest::TriMesh;
use ngc_core::model::{ModelError, NgcModel, Scene};
use ngc_core::nn::Scalar;
use rayon::prelude::*;

use crate::error::CliError;
use crate::scene::ShapeDoc;

const CHUNK: usize = 8192;

/// Evaluates `(latent, coords)` rows; rows whose latent carries a blend use
/// the blended field, the rest the plain one.
pub fn eval_rows<S: Scalar>(
    model: &NgcModel<S>,
    blends: &HashMap<usize, BlendSpec>,
    rows: &[(usize, RelativeCoords)],
) -> Result<Vec<S>, ModelError> {
    if blends.is_empty() {
        return model.query_relative_batch(rows);
    }
    let mut out = vec![S::zero(); rows.len()];
    let (plain, mixed): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|&i| !blends.contains_key(&rows[i].0));
    let plain_rows: Vec<_> = plain.iter().map(|&i| rows[i]).collect();
    for (&i, v) in plain.iter().zip(model.query_relative_batch(&plain_rows)?) {
        out[i] = v;
    }
    for (latent, spec) in blends {
        let idx: Vec<usize> = mixed.iter().copied().filter(|&i| rows[i].0 == *latent).collect();
        let coords: Vec<RelativeCoords> = idx.iter().map(|&i| rows[i].1).collect();
        for (&i, v) in idx.iter().zip(blended_values(model, model, spec, &coords)?) {
            out[i] = v;
        }
    }
    Ok(out)
}

/// World-space signed distances of a scene, parallel over point chunks.
pub fn world_values<S: Scalar>(
    model: &NgcModel<S>,
    scene: &Scene,
    blends: &HashMap<usize, BlendSpec>,
    points: &[Point3<f64>],
) -> Result<Vec<f64>, ModelError> {
    let parts: Result<Vec<Vec<S>>, ModelError> = points
        .par_chunks(CHUNK)
        .map(|c| scene.query_world_with(c, |rows| eval_rows(model, blends, rows)))
        .collect();
    Ok(parts?.into_iter().flatten().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
}

/// Extracts the zero set of a shape on a `resolution^3` grid over `[-1, 1]^3`.
pub fn extract_shape<S: Scalar>(model: &NgcModel<S>, shape: &ShapeDoc, resolution: usize, prefilter: bool) -> Result<TriMesh, CliError> {
    let grid = GridSpec::new(resolution).map_err(|e| CliError::schema(e.to_string()))?;
    let (scene, blends) = shape.scene();
    if let Some(&bad) = scene.latents.iter().chain(blends.values().map(|b| &b.latent_b)).find(|&&l| l >= model.n_latents()) {
        return Err(CliError::schema(format!("scene uses latent {bad} but the model has {}", model.n_latents())));
    }
    let ex = extract_scene_with(&scene, &grid, prefilter, |pts| world_values(model, &scene, &blends, pts))?;
    Ok(ex.mesh)
}

/// Little-endian wire format: vertex count, triangle count (u32), then
/// `f32` xyz per vertex and `u32` indices per triangle.
pub fn encode_mesh(mesh: &TriMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 12 * mesh.vertices.len() + 12 * mesh.triangles.len());
    out.extend((mesh.vertices.len() as u32).to_le_bytes());
    out.extend((mesh.triangles.len() as u32).to_le_bytes());
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            out.extend((c as f32).to_le_bytes());
        }
    }
    for t in &mesh.triangles {
        for i in t {
            out.extend(i.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_mesh`] (vertices widened back to `f64`).
pub fn decode_mesh(bytes: &[u8]) -> Option<TriMesh> {
    let word = |i: usize| bytes.get(4 * i..4 * i + 4).map(|b| [b[0], b[1], b[2], b[3]]);
    let nv = u32::from_le_bytes(word(0)?) as usize;
    let nt = u32::from_le_bytes(word(1)?) as usize;
    if bytes.len() != 8 + 12 * nv + 12 * nt {
        return None;
    }
    let f = |i: usize| f32::from_le_bytes(word(i).expect("length checked")) as f64;
    let vertices = (0..nv).map(|k| Point3::new(f(2 + 3 * k), f(3 + 3 * k), f(4 + 3 * k))).collect();
    let base = 2 + 3 * nv;
    let u = |i: usize| u32::from_le_bytes(word(i).expect("length checked"));
    let triangles = (0..nt).map(|k| [u(base + 3 * k), u(base + 3 * k + 1), u(base + 3 * k + 2)]).collect();
    Some(TriMesh::from_raw(vertices, triangles))
}
