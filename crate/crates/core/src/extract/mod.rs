//! Grid evaluation and isosurface extraction.

mod mc;
mod prism;

pub use mc::marching_cubes;
pub use prism::{build_prisms, BoundingPrism, DEFAULT_PRISMS_PER_GC};

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::TriMesh;
use crate::model::{ModelError, NgcModel, Scene, OUTSIDE_SDF};
use crate::nn::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid resolution must be at least 8, got {0}")]
    Resolution(usize),
    #[error("grid bounds are degenerate")]
    Bounds,
}

/// Regular sample grid: `resolution` points per axis spanning `min..=max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub resolution: usize,
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl GridSpec {
    /// Grid over `[-1, 1]^3`, the normalized shape box `[-0.8, 0.8]^3` plus padding.
    pub fn new(resolution: usize) -> Result<Self, GridError> {
        Self::with_bounds(resolution, Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0))
    }

    pub fn with_bounds(resolution: usize, min: Point3<f64>, max: Point3<f64>) -> Result<Self, GridError> {
        if resolution < 8 {
            return Err(GridError::Resolution(resolution));
        }
        if !(0..3).all(|k| max[k] > min[k] && (max[k] - min[k]).is_finite()) {
            return Err(GridError::Bounds);
        }
        Ok(Self { resolution, min, max })
    }

    pub fn spacing(&self) -> Vector3<f64> {
        (self.max - self.min) / (self.resolution - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        let h = self.spacing();
        Point3::new(self.min.x + h.x * i as f64, self.min.y + h.y * j as f64, self.min.z + h.z * k as f64)
    }

    /// Point of the flat index (x fastest).
    pub fn point_at_index(&self, idx: usize) -> Point3<f64> {
        let n = self.resolution;
        self.point(idx % n, (idx / n) % n, idx / (n * n))
    }

    pub fn points(&self) -> Vec<Point3<f64>> {
        (0..self.len()).map(|i| self.point_at_index(i)).collect()
    }

    /// Flags grid points inside at least one prism.
    pub fn mask(&self, prisms: &[BoundingPrism]) -> Vec<bool> {
        let n = self.resolution;
        let h = self.spacing();
        let mut mask = vec![false; self.len()];
        for p in prisms {
            let (lo, hi) = p.aabb();
            let range = |k: usize| {
                let a = ((lo[k] - self.min[k]) / h[k]).floor().max(0.0) as usize;
                let b = (((hi[k] - self.min[k]) / h[k]).ceil().max(0.0) as usize).min(n - 1);
                a..=b
            };
            for k in range(2) {
                for j in range(1) {
                    for i in range(0) {
                        let idx = i + n * (j + n * k);
                        if !mask[idx] && p.contains(&self.point(i, j, k)) {
                            mask[idx] = true;
                        }
                    }
                }
            }
        }
        mask
    }
}

/// An extracted mesh with evaluation statistics.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub mesh: TriMesh,
    /// Grid points where the field was evaluated.
    pub evaluated: usize,
}

/// Prisms of every GC of the scene padded by one grid cell.
pub fn scene_prisms(scene: &Scene, grid: &GridSpec) -> Vec<BoundingPrism> {
    let pad = grid.spacing().max();
    scene.gcs.iter().flat_map(|gc| build_prisms(gc, DEFAULT_PRISMS_PER_GC, pad)).collect()
}

/// Samples `field` on the grid. With `prisms`, points outside all of them
/// receive the outside sentinel without evaluation.
pub fn sample_field<F>(grid: &GridSpec, prisms: Option<&[BoundingPrism]>, field: F) -> Result<(Vec<f64>, usize), ModelError>
where
    F: Fn(&[Point3<f64>]) -> Result<Vec<f64>, ModelError>,
{
    let points = grid.points();
    let mut values = vec![OUTSIDE_SDF; points.len()];
    let selected: Vec<usize> = match prisms {
        Some(p) => grid.mask(p).iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect(),
        None => (0..points.len()).collect(),
    };
    let chosen: Vec<Point3<f64>> = selected.iter().map(|&i| points[i]).collect();
    let out = field(&chosen)?;
    for (&i, v) in selected.iter().zip(out) {
        values[i] = v;
    }
    Ok((values, selected.len()))
}

/// Extracts the zero set of a scene's field, skipping grid points outside
/// every GC prism when `prefilter` is set.
pub fn extract_scene_with<F>(scene: &Scene, grid: &GridSpec, prefilter: bool, field: F) -> Result<Extraction, ModelError>
where
    F: Fn(&[Point3<f64>]) -> Result<Vec<f64>, ModelError>,
{
    let prisms = prefilter.then(|| scene_prisms(scene, grid));
    let (values, evaluated) = sample_field(grid, prisms.as_deref(), field)?;
    let mesh = marching_cubes(grid, &values);
    if mesh.triangles.is_empty() {
        log::warn!("field has no sign change on the grid; mesh is empty");
    }
    Ok(Extraction { mesh, evaluated })
}

/// Mesh of a fitted scene, evaluating the network only inside GC prisms.
pub fn extract_mesh<S: Scalar>(model: &NgcModel<S>, scene: &Scene, grid: &GridSpec) -> Result<Extraction, ModelError> {
    extract_scene_with(scene, grid, true, |pts| world_values(model, scene, pts))
}

/// Same as [`extract_mesh`] but evaluates every grid point.
pub fn extract_mesh_full<S: Scalar>(model: &NgcModel<S>, scene: &Scene, grid: &GridSpec) -> Result<Extraction, ModelError> {
    extract_scene_with(scene, grid, false, |pts| world_values(model, scene, pts))
}

fn world_values<S: Scalar>(model: &NgcModel<S>, scene: &Scene, pts: &[Point3<f64>]) -> Result<Vec<f64>, ModelError> {
    let chunks: Vec<&[Point3<f64>]> = pts.chunks(8192).collect();
    let parts: Result<Vec<Vec<S>>, ModelError> = chunks.par_iter().map(|c| scene.query_world_batch(model, c)).collect();
    Ok(parts?.into_iter().flatten().map(|v| v.to_f64().expect("finite")).collect())
}

/// Extracts an analytic field on the full grid.
pub fn extract_function<F>(grid: &GridSpec, f: F) -> TriMesh
where
    F: Fn(&Point3<f64>) -> f64 + Sync,
{
    let values: Vec<f64> = grid.points().par_iter().map(&f).collect();
    marching_cubes(grid, &values)
}
