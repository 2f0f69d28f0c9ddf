//! The pipeline steps behind each subcommand, usable without a process.

use std::path::{Path, PathBuf};

use nalgebra::Point3;
use ngc_core::edit::{apply_handle_deformation, blend_radii, blend_weight, Handle, HandleConstraint};
use ngc_core::ingest::{
    estimate_gc_radii, load_and_normalize, sample_training_set, MeshQuery, SampleSet, SamplingConfig, TriMesh,
};
use ngc_core::geometry::KeyFrame;
use ngc_core::metrics::{evaluate, MetricReport};
use ngc_core::model::{train, ModelConfig, NgcModel, TrainConfig, TrainReport, TrainingShape};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::scene::{resolve, BlendEntry, Document};

/// Radius scale over the distance to the surface when estimating radii.
pub const RADIUS_SCALE: f64 = 1.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandleEntry {
    pub src: [f64; 3],
    pub dst: [f64; 3],
}

/// Handle deformation request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformJob {
    pub shape: String,
    pub handles: Vec<HandleEntry>,
    /// Global GC indices that must not move.
    #[serde(default)]
    pub fixed_gcs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_rev: Option<u64>,
}

/// Feature blend request: GC `gc_a` takes on the features of `gc_b`
/// with weight `1 - w(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendJob {
    pub gc_a: usize,
    pub gc_b: usize,
    pub a_coef: f64,
    pub b_coef: f64,
    #[serde(default)]
    pub blend_radii: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_rev: Option<u64>,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_model(path: &Path) -> Result<NgcModel<f32>, CliError> {
    Ok(NgcModel::<f32>::load(path)?)
}

pub fn save_mesh(mesh: &TriMesh, path: &Path) -> Result<(), CliError> {
    mesh.save_obj(path).map_err(|e| CliError::io(path.display(), e))
}

/// Applies a deformation job to a document.
pub fn deform(doc: &Document, job: &DeformJob) -> Result<Document, CliError> {
    let (pos, first) = doc.shape_index(Some(&job.shape))?;
    let shape = &doc.shapes[pos];
    let n = shape.gc_count();
    let mut fixed = Vec::with_capacity(job.fixed_gcs.len());
    for &g in &job.fixed_gcs {
        if g < first || g >= first + n {
            return Err(CliError::schema(format!("fixed GC {g} is not part of shape {:?}", job.shape)));
        }
        fixed.push(g - first);
    }
    let handles = job
        .handles
        .iter()
        .map(|h| {
            if h.src.iter().chain(&h.dst).all(|v| v.is_finite()) {
                Ok(Handle { src: Point3::from(h.src), dst: Point3::from(h.dst) })
            } else {
                Err(CliError::schema("handle coordinates must be finite"))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (scene, _) = shape.scene();
    let moved = apply_handle_deformation(&scene, &HandleConstraint { handles, fixed_gcs: fixed })?;
    let mut out = doc.clone();
    out.shapes[pos].set_cylinders(moved.gcs);
    Ok(out)
}

/// Records a feature blend on `gc_a` and optionally mixes its radii.
pub fn blend(doc: &Document, job: &BlendJob) -> Result<Document, CliError> {
    if !(job.a_coef.is_finite() && job.b_coef.is_finite()) {
        return Err(CliError::schema("blend coefficients must be finite"));
    }
    let a = doc.gc(job.gc_a)?.clone();
    let b = doc.gc(job.gc_b)?.clone();
    let sharing = doc.all_gcs().filter(|g| g.latent == a.latent).count();
    if sharing > 1 {
        return Err(CliError::schema(format!("GC {} shares its latent with other GCs", job.gc_a)));
    }
    let mut out = doc.clone();
    let target = out.gc_mut(job.gc_a)?;
    target.blend = Some(BlendEntry { latent_b: b.latent, a_coef: job.a_coef, b_coef: job.b_coef });
    if job.blend_radii {
        target.gc = blend_radii(&a.gc, &b.gc, |t| blend_weight(job.a_coef, job.b_coef, t))?;
    }
    Ok(out)
}

/// Loads a shape's OBJ in the scene frame, storing the normalization used.
fn load_part(doc: &mut Document, scene_path: Option<&Path>, shape: usize, mesh: usize) -> Result<TriMesh, CliError> {
    let entry = &doc.shapes[shape].meshes[mesh];
    let obj = entry
        .obj
        .as_ref()
        .ok_or_else(|| CliError::schema(format!("shape {:?} mesh {mesh} has no OBJ to fit", doc.shapes[shape].id)))?;
    let path = resolve(scene_path, obj);
    let raw = TriMesh::load_obj(&path).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })?;
    Ok(match entry.normalization {
        Some(n) => raw.transformed(&n),
        None => {
            let (m, n) = load_and_normalize(&raw)?;
            doc.shapes[shape].meshes[mesh].normalization = Some(n);
            m
        }
    })
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub width: usize,
    pub train: TrainConfig,
    /// Space samples per mesh; surface and noisy-surface get half each.
    pub samples: usize,
    /// Replace key frame radii by 1.1 times the distance to the surface.
    pub estimate_radii: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { width: ModelConfig::desk().width, train: TrainConfig::desk(), samples: 20_000, estimate_radii: false }
    }
}

/// Samples every shape and fits one model to all of them. Returns the model,
/// the document (with normalizations and radii filled in) and the history.
pub fn fit(
    doc: &Document,
    scene_path: Option<&Path>,
    opts: &FitOptions,
    progress: &mut dyn FnMut(f64),
) -> Result<(NgcModel<f32>, Document, TrainReport), CliError> {
    let mut doc = doc.clone();
    let mut sets = Vec::with_capacity(doc.shapes.len());
    for si in 0..doc.shapes.len() {
        let mut per_gc = Vec::new();
        for mi in 0..doc.shapes[si].meshes.len() {
            let part = load_part(&mut doc, scene_path, si, mi)?;
            let query = MeshQuery::new(part);
            if opts.estimate_radii {
                for g in &mut doc.shapes[si].meshes[mi].gcs {
                    let ts: Vec<f64> = g.gc.keyframes().iter().map(|k| k.t).collect();
                    let radii = estimate_gc_radii(g.gc.curve(), &ts, &query, RADIUS_SCALE)?;
                    let kfs = g
                        .gc
                        .keyframes()
                        .iter()
                        .zip(radii)
                        .map(|(k, (ry, rz))| KeyFrame::new(k.t, ry, rz, k.rot.into_inner()))
                        .collect::<Result<Vec<_>, _>>()?;
                    g.gc = g.gc.with_keyframes(kfs)?;
                }
            }
            let gcs: Vec<_> = doc.shapes[si].meshes[mi].gcs.iter().map(|g| g.gc.clone()).collect();
            let cfg = SamplingConfig {
                space: opts.samples,
                surface: opts.samples / 2,
                noisy: opts.samples / 2,
                seed: opts.train.seed.wrapping_add((si * 1000 + mi) as u64),
                ..SamplingConfig::default()
            };
            let (set, report) = sample_training_set(&query, &gcs, &cfg)?;
            log::info!("shape {si} mesh {mi}: {:?} samples, {} surface rejections", report.point_counts, report.surface_rejections);
            per_gc.extend(set.per_gc);
        }
        sets.push(SampleSet { per_gc });
    }
    let scenes: Vec<_> = doc.shapes.iter().map(|s| s.scene().0).collect();
    let shapes: Vec<TrainingShape> = scenes.iter().zip(&sets).map(|(scene, samples)| TrainingShape { scene, samples }).collect();
    let mut model = NgcModel::<f32>::new(ModelConfig::with_width(opts.width), doc.latent_count(), opts.train.seed)?;
    let report = train(&mut model, &shapes, &opts.train, progress)?;
    model.set_config_hash(opts.train.hash());
    Ok((model, doc, report))
}

/// Metric report between two OBJ files.
pub fn eval(mesh_a: &Path, mesh_b: &Path, samples: usize, seed: u64) -> Result<MetricReport, CliError> {
    let load = |p: &PathBuf| TriMesh::load_obj(p).map_err(CliError::from);
    let a = load(&mesh_a.to_path_buf())?;
    let b = load(&mesh_b.to_path_buf())?;
    if samples == 0 {
        return Err(CliError::schema("need at least one sample"));
    }
    Ok(evaluate(&a, &b, samples, seed)?)
}
