//! Cylinder radius estimation and training sample generation.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::{Read, Write};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{IngestError, MeshQuery, TriMesh};
use crate::extract::{build_prisms, BoundingPrism, DEFAULT_PRISMS_PER_GC};
use crate::geometry::{DiscretizedCurve, GeneralizedCylinder, RelativeCoords};

/// Radii `k * d` at each key frame parameter, where `d` is the distance
/// from the curve point to the mesh surface.
pub fn estimate_gc_radii(
    curve: &DiscretizedCurve,
    keyframe_ts: &[f64],
    mesh: &MeshQuery,
    k: f64,
) -> Result<Vec<(f64, f64)>, IngestError> {
    if !(k >= 1.0) {
        return Err(IngestError::InvalidScale(k));
    }
    Ok(keyframe_ts
        .iter()
        .map(|&t| {
            let p = curve.point_at(t);
            let sd = mesh.signed_distance(&p);
            if sd > 0.0 {
                log::warn!("key frame at t={t} lies outside the mesh (distance {sd:.4})");
            }
            let r = k * sd.abs();
            (r, r)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SampleKind {
    Surface = 0,
    NoisySurface = 1,
    Space = 2,
}

impl SampleKind {
    fn from_code(code: f32) -> Option<Self> {
        match code as i32 {
            0 => Some(Self::Surface),
            1 => Some(Self::NoisySurface),
            2 => Some(Self::Space),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub coords: RelativeCoords,
    /// Signed distance to the mesh, world units.
    pub sdf: f64,
    pub kind: SampleKind,
}

/// Training records grouped by cylinder.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub per_gc: Vec<Vec<Sample>>,
}

const SAMPLE_MAGIC: &[u8; 4] = b"NGCS";
const SAMPLE_VERSION: u32 = 1;

impl SampleSet {
    pub fn len(&self) -> usize {
        self.per_gc.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Layout: `"NGCS"`, version `u32`, cylinder count `u32`, one record
    /// count `u32` per cylinder, then rows of five little-endian `f32`
    /// `(t, a, b, sdf, kind)`.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(SAMPLE_MAGIC)?;
        w.write_all(&SAMPLE_VERSION.to_le_bytes())?;
        w.write_all(&(self.per_gc.len() as u32).to_le_bytes())?;
        for g in &self.per_gc {
            w.write_all(&(g.len() as u32).to_le_bytes())?;
        }
        for g in &self.per_gc {
            for s in g {
                for v in [s.coords.t, s.coords.a, s.coords.b, s.sdf, s.kind as u8 as f64] {
                    w.write_all(&(v as f32).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, IngestError> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != SAMPLE_MAGIC {
            return Err(IngestError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != SAMPLE_VERSION {
            return Err(IngestError::UnsupportedVersion(version));
        }
        let n = read_u32(&mut r)? as usize;
        let counts: Vec<usize> = (0..n).map(|_| read_u32(&mut r).map(|c| c as usize)).collect::<Result<_, _>>()?;
        let mut per_gc = Vec::with_capacity(n);
        for c in counts {
            let mut g = Vec::with_capacity(c);
            for _ in 0..c {
                let mut row = [0f32; 5];
                for v in &mut row {
                    let mut b = [0u8; 4];
                    read_exact(&mut r, &mut b)?;
                    *v = f32::from_le_bytes(b);
                }
                let kind = SampleKind::from_code(row[4]).ok_or(IngestError::BadRecord)?;
                g.push(Sample {
                    coords: RelativeCoords::new(row[0] as f64, row[1] as f64, row[2] as f64),
                    sdf: row[3] as f64,
                    kind,
                });
            }
            per_gc.push(g);
        }
        Ok(Self { per_gc })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), IngestError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => IngestError::Truncated,
        _ => IngestError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, IngestError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    pub space: usize,
    pub surface: usize,
    pub noisy: usize,
    /// Standard deviation of the normal offset of noisy surface samples.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { space: 100_000, surface: 50_000, noisy: 50_000, sigma: 0.01, seed: 0 }
    }
}

/// Diagnostics from [`sample_training_set`].
#[derive(Clone, Debug, Default)]
pub struct SamplingReport {
    /// Points generated per kind (surface, noisy, space).
    pub point_counts: [usize; 3],
    /// Surface samples that fell outside every cylinder.
    pub surface_rejections: usize,
    /// Signed normal offsets applied to the noisy samples.
    pub noise_offsets: Vec<f64>,
}

struct SurfacePoint {
    point: Point3<f64>,
    normal: Vector3<f64>,
}

fn uniform_surface_points(mesh: &TriMesh, n: usize, rng: &mut ChaCha8Rng) -> Vec<SurfacePoint> {
    let mut cdf = Vec::with_capacity(mesh.triangles.len());
    let mut acc = 0.0;
    for i in 0..mesh.triangles.len() {
        acc += mesh.face_area(i);
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let x = rng.random::<f64>() * acc;
            let tri = cdf.partition_point(|&c| c < x).min(cdf.len() - 1);
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let [a, b, c] = mesh.corners(tri);
            SurfacePoint { point: a + (b - a) * u + (c - a) * v, normal: mesh.face_normal(tri) }
        })
        .collect()
}

#[derive(PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Weighted sample elimination: repeatedly removes the sample with the
/// highest crowding weight until `target` remain. Returns kept indices in
/// input order.
pub fn sample_elimination(points: &[Point3<f64>], target: usize, area: f64) -> Vec<usize> {
    let n = points.len();
    if target >= n {
        return (0..n).collect();
    }
    let r_max = (area / (2.0 * 3f64.sqrt() * target as f64)).sqrt();
    let reach = 2.0 * r_max;
    let cell = |p: &Point3<f64>| ((p.x / reach).floor() as i64, (p.y / reach).floor() as i64, (p.z / reach).floor() as i64);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let weight = |d: f64| (1.0 - d.min(reach) / reach).powi(8);
    let neighbors: Vec<Vec<(usize, f64)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (cx, cy, cz) = cell(p);
            let mut out = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &j in list {
                                if j != i {
                                    let d = (points[j] - p).norm();
                                    if d < reach {
                                        out.push((j, weight(d)));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut w: Vec<f64> = neighbors.iter().map(|nb| nb.iter().map(|x| x.1).sum()).collect();
    let mut alive = vec![true; n];
    let mut heap: BinaryHeap<HeapEntry> = (0..n).map(|i| HeapEntry(w[i], i)).collect();
    let mut remaining = n;
    while remaining > target {
        let Some(HeapEntry(wi, i)) = heap.pop() else { break };
        if !alive[i] || wi != w[i] {
            continue;
        }
        alive[i] = false;
        remaining -= 1;
        for &(j, wij) in &neighbors[i] {
            if alive[j] {
                w[j] -= wij;
                heap.push(HeapEntry(w[j], j));
            }
        }
    }
    (0..n).filter(|&i| alive[i]).collect()
}

/// All in-volume candidates of `q` across the cylinders, as `(gc, coords)`.
fn locate(gcs: &[GeneralizedCylinder], q: &Point3<f64>) -> Vec<(usize, RelativeCoords)> {
    let mut out = Vec::new();
    for (g, gc) in gcs.iter().enumerate() {
        for c in gc.world_to_relative(q) {
            if c.in_volume() {
                out.push((g, c.coords));
            }
        }
    }
    out
}

/// Generates surface, noisy-surface and space samples for one shape and
/// expresses each in the relative coordinates of every cylinder containing it.
pub fn sample_training_set(
    mesh: &MeshQuery,
    gcs: &[GeneralizedCylinder],
    cfg: &SamplingConfig,
) -> Result<(SampleSet, SamplingReport), IngestError> {
    let tri = mesh.mesh();
    if tri.is_empty() {
        return Err(IngestError::EmptyMesh);
    }
    if !tri.is_consistently_oriented() {
        return Err(IngestError::NonOrientable);
    }
    if gcs.is_empty() {
        return Err(IngestError::NoCylinders);
    }
    let area: f64 = (0..tri.triangles.len()).map(|i| tri.face_area(i)).sum();
    let mut set = SampleSet { per_gc: vec![Vec::new(); gcs.len()] };
    let mut report = SamplingReport::default();
    let push = |set: &mut SampleSet, located: Vec<(usize, RelativeCoords)>, sdf: f64, kind: SampleKind| {
        for (g, coords) in located {
            set.per_gc[g].push(Sample { coords, sdf, kind });
        }
    };

    // surface: sample elimination over 4x oversampled uniform points
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    if cfg.surface > 0 {
        let pool = uniform_surface_points(tri, cfg.surface * 4, &mut rng);
        let coords: Vec<_> = pool.iter().map(|s| s.point).collect();
        let keep = sample_elimination(&coords, cfg.surface, area);
        let mut kept = vec![false; pool.len()];
        keep.iter().for_each(|&i| kept[i] = true);
        let located: Vec<_> = keep.par_iter().map(|&i| locate(gcs, &pool[i].point)).collect();
        let rejected = located.iter().filter(|l| l.is_empty()).count();
        if rejected as f64 > 0.01 * cfg.surface as f64 {
            return Err(IngestError::Coverage { rejected, total: cfg.surface });
        }
        report.surface_rejections = rejected;
        let mut accepted = 0;
        for l in located.into_iter().filter(|l| !l.is_empty()) {
            push(&mut set, l, 0.0, SampleKind::Surface);
            accepted += 1;
        }
        // refill rejected slots from the eliminated pool, in order
        let mut spare = (0..pool.len()).filter(|&i| !kept[i]);
        while accepted < cfg.surface {
            let Some(i) = spare.next() else {
                return Err(IngestError::Coverage { rejected, total: cfg.surface });
            };
            let l = locate(gcs, &pool[i].point);
            if !l.is_empty() {
                push(&mut set, l, 0.0, SampleKind::Surface);
                accepted += 1;
            }
        }
        report.point_counts[0] = accepted;
    }

    // noisy surface: offsets along the face normal
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut noisy = 0;
    let mut attempts = 0;
    while noisy < cfg.noisy {
        let need = cfg.noisy - noisy;
        let base = uniform_surface_points(tri, need, &mut rng);
        let offsets: Vec<f64> = (0..need).map(|_| cfg.sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let results: Vec<_> = base
            .par_iter()
            .zip(&offsets)
            .map(|(s, &o)| {
                let q = s.point + s.normal * o;
                (locate(gcs, &q), mesh.signed_distance(&q))
            })
            .collect();
        for ((l, sdf), o) in results.into_iter().zip(offsets) {
            if !l.is_empty() {
                push(&mut set, l, sdf, SampleKind::NoisySurface);
                report.noise_offsets.push(o);
                noisy += 1;
            }
        }
        attempts += need;
        if attempts > 10 * cfg.noisy.max(1) {
            return Err(IngestError::Coverage { rejected: attempts - noisy, total: attempts });
        }
    }
    report.point_counts[1] = noisy;

    // space: uniform in the union of cylinders by rejection from their prisms
    let prisms: Vec<(usize, BoundingPrism)> = gcs
        .iter()
        .enumerate()
        .flat_map(|(g, gc)| build_prisms(gc, DEFAULT_PRISMS_PER_GC, 0.0).into_iter().map(move |p| (g, p)))
        .collect();
    let mut cdf = Vec::with_capacity(prisms.len());
    let mut acc = 0.0;
    for (_, p) in &prisms {
        acc += p.volume();
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut space = 0;
    let mut rounds = 0;
    while space < cfg.space {
        let need = (cfg.space - space) * 2 + 64;
        let proposals: Vec<(Point3<f64>, f64)> = (0..need)
            .map(|_| {
                let x = rng.random::<f64>() * acc;
                let k = cdf.partition_point(|&c| c < x).min(cdf.len() - 1);
                let unit = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                (prisms[k].1.point_at(&unit), rng.random::<f64>())
            })
            .collect();
        let results: Vec<_> = proposals
            .par_iter()
            .map(|(q, u)| {
                // overlapping prisms are proposed once per cover; thin accordingly
                let cover = prisms.iter().filter(|(_, p)| p.contains(q)).count().max(1);
                if *u * cover as f64 > 1.0 {
                    return None;
                }
                let l = locate(gcs, q);
                if l.is_empty() {
                    return None;
                }
                Some((l, mesh.signed_distance(q)))
            })
            .collect();
        for (l, sdf) in results.into_iter().flatten() {
            if space == cfg.space {
                break;
            }
            push(&mut set, l, sdf, SampleKind::Space);
            space += 1;
        }
        rounds += 1;
        if rounds > 1000 {
            return Err(IngestError::Coverage { rejected: 0, total: space });
        }
    }
    report.point_counts[2] = space;
    Ok((set, report))
}
