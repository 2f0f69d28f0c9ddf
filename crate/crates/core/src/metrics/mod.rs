//! Surface distances and volume/area measures.

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TriMesh;

/// Largest point count handed to the exact assignment solver.
pub const EMD_MAX_POINTS: usize = 2048;

/// Surface samples per mesh for metric reports.
pub const DEFAULT_METRIC_SAMPLES: usize = 50_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("point set is empty")]
    EmptySet,
    #[error("point sets differ in size ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("mesh is not closed; volume undefined")]
    OpenMesh,
    #[error("reference {0} is zero")]
    ZeroReference(&'static str),
}

/// Enclosed volume (only for closed meshes) and surface area.
pub fn volume_area(mesh: &TriMesh) -> (Result<f64, MetricError>, f64) {
    let mut vol = 0.0;
    let mut area = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t);
        vol += a.coords.dot(&b.coords.cross(&c.coords)) / 6.0;
        area += mesh.face_area(t);
    }
    let vol = if mesh.is_closed() { Ok(vol) } else { Err(MetricError::OpenMesh) };
    (vol, area)
}

/// Relative volume and area change from `reference` to `deformed`.
pub fn deformation_errors(reference: &TriMesh, deformed: &TriMesh) -> Result<(f64, f64), MetricError> {
    let (v0, a0) = volume_area(reference);
    let (v1, a1) = volume_area(deformed);
    let (v0, v1) = (v0?, v1?);
    if v0 == 0.0 {
        return Err(MetricError::ZeroReference("volume"));
    }
    if a0 == 0.0 {
        return Err(MetricError::ZeroReference("area"));
    }
    Ok(((v1 - v0).abs() / v0.abs(), (a1 - a0).abs() / a0))
}

/// Nearest-neighbor distance from each point of `from` to the set `to`.
pub fn nearest_distances(from: &[Point3<f64>], to: &[Point3<f64>]) -> Vec<f64> {
    let coords: Vec<[f64; 3]> = to.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&coords).expect("non-empty finite point set");
    from.iter()
        .map(|p| tree.query(&[p.x, p.y, p.z]).nearest_one::<SquaredEuclidean<f64>>().execute().distance.sqrt())
        .collect()
}

/// Chamfer distance (sum of both mean squared nearest distances) and the
/// averaged Hausdorff distance (mean of both one-sided maxima).
pub fn chamfer_hausdorff(x: &[Point3<f64>], y: &[Point3<f64>]) -> Result<(f64, f64), MetricError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let dxy = nearest_distances(x, y);
    let dyx = nearest_distances(y, x);
    let mean_sq = |d: &[f64]| d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
    let max = |d: &[f64]| d.iter().copied().fold(0.0, f64::max);
    Ok((mean_sq(&dxy) + mean_sq(&dyx), 0.5 * (max(&dxy) + max(&dyx))))
}

/// Evenly strided subset of at most `cap` points.
pub fn subsample(points: &[Point3<f64>], cap: usize) -> Vec<Point3<f64>> {
    if points.len() <= cap {
        return points.to_vec();
    }
    (0..cap).map(|i| points[i * points.len() / cap]).collect()
}

/// Earth mover's distance: mean matched distance of the optimal one-to-one
/// assignment. Sets above [`EMD_MAX_POINTS`] are subsampled first.
pub fn emd(x: &[Point3<f64>], y: &[Point3<f64>]) -> Result<f64, MetricError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let xs = subsample(x, EMD_MAX_POINTS);
    let ys = subsample(y, EMD_MAX_POINTS);
    if xs.len() != ys.len() {
        return Err(MetricError::SizeMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    let cost: Vec<f64> = xs.iter().flat_map(|a| ys.iter().map(move |b| (a - b).norm())).collect();
    let assignment = hungarian(&cost, n);
    Ok(assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64)
}

/// Minimum-cost perfect matching on a dense `n x n` row-major cost matrix
/// (shortest augmenting paths with potentials). Returns the column of each row.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    // 1-based rows/columns; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[row_of[j] - 1] = j - 1;
    }
    out
}

/// Area-weighted uniform samples on the surface.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Vec<Point3<f64>> {
    let mut cdf = Vec::with_capacity(mesh.triangles.len());
    let mut acc = 0.0;
    for t in 0..mesh.triangles.len() {
        acc += mesh.face_area(t);
        cdf.push(acc);
    }
    if acc <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = rng.random_range(0.0..acc);
            let t = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
            let [a, b, c] = mesh.corners(t);
            let (mut s, mut w): (f64, f64) = (rng.random(), rng.random());
            if s + w > 1.0 {
                s = 1.0 - s;
                w = 1.0 - w;
            }
            a + (b - a) * s + (c - a) * w
        })
        .collect()
}

/// Fitting and deformation scores between a reference and a candidate mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd: f64,
    pub hd: f64,
    pub emd: f64,
    /// `None` when either mesh is open.
    pub eps_v: Option<f64>,
    pub eps_a: f64,
    pub samples: usize,
    pub emd_samples: usize,
    pub seed: u64,
}

/// Samples both surfaces with the same seed and computes every metric, so
/// identical meshes score exactly zero.
pub fn evaluate(reference: &TriMesh, candidate: &TriMesh, samples: usize, seed: u64) -> Result<MetricReport, MetricError> {
    let x = sample_surface(reference, samples, seed);
    let y = sample_surface(candidate, samples, seed);
    let (cd, hd) = chamfer_hausdorff(&x, &y)?;
    let emd_value = emd(&x, &y)?;
    let (v0, a0) = volume_area(reference);
    let (v1, a1) = volume_area(candidate);
    if a0 == 0.0 {
        return Err(MetricError::ZeroReference("area"));
    }
    let eps_v = match (v0, v1) {
        (Ok(v0), Ok(v1)) if v0 != 0.0 => Some((v1 - v0).abs() / v0.abs()),
        _ => None,
    };
    Ok(MetricReport {
        cd,
        hd,
        emd: emd_value,
        eps_v,
        eps_a: (a1 - a0).abs() / a0,
        samples,
        emd_samples: samples.min(EMD_MAX_POINTS),
        seed,
    })
}
