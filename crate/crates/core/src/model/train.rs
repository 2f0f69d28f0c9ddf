use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Batch, BatchGroup, ModelError, NgcModel, Scene};
use crate::ingest::{SampleKind, SampleSet};
use crate::nn::{AdamConfig, AdamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Latent regularization weight.
    pub lambda: f64,
    pub learning_rate: f64,
    /// Phase-1 epochs (network and latents jointly).
    pub epochs: usize,
    /// Batches per epoch.
    pub iterations_per_epoch: usize,
    pub shapes_per_batch: usize,
    /// Space samples per shape per batch, split evenly over its GCs.
    pub space_samples: usize,
    /// Surface and noisy-surface samples per shape per batch.
    pub surface_samples: usize,
    /// Phase-2 epochs (latents only); `None` means 10% of `epochs`.
    pub phase2_epochs: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            learning_rate: 1e-4,
            epochs: 10_000,
            iterations_per_epoch: 10,
            shapes_per_batch: 16,
            space_samples: 20_000,
            surface_samples: 20_000,
            phase2_epochs: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small run for a single shape on one CPU core: 2,000 phase-1 steps.
    pub fn desk() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 200,
            shapes_per_batch: 1,
            space_samples: 512,
            surface_samples: 512,
            ..Self::default()
        }
    }

    pub fn phase2(&self) -> usize {
        self.phase2_epochs.unwrap_or(self.epochs / 10)
    }

    /// SHA-256 of the JSON-serialized configuration.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).into()
    }

    fn validate(&self) -> Result<(), TrainError> {
        let ok = self.lambda >= 0.0
            && self.learning_rate > 0.0
            && self.iterations_per_epoch > 0
            && self.shapes_per_batch > 0
            && self.space_samples + self.surface_samples > 0;
        if ok {
            Ok(())
        } else {
            Err(TrainError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// One shape to fit: its scene and per-GC samples (same GC order).
#[derive(Clone, Copy, Debug)]
pub struct TrainingShape<'a> {
    pub scene: &'a Scene,
    pub samples: &'a SampleSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Joint,
    LatentOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    /// Mean total loss over the epoch's batches.
    pub loss: f64,
    pub data_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn final_data_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.data_loss)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("shape {shape} GC {gc} has no samples")]
    MissingSamples { shape: usize, gc: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, report: TrainReport },
    #[error(transparent)]
    Model(#[from] ModelError),
}

struct GcPool {
    latent: usize,
    space: Vec<usize>,
    surface: Vec<usize>,
}

/// Two-phase auto-decoder fitting. Phase 1 updates the shared MLPs and the
/// latents of the sampled shapes; phase 2 freezes the MLPs.
pub fn train(
    model: &mut NgcModel<f32>,
    shapes: &[TrainingShape],
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(f64),
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if shapes.is_empty() {
        return Err(TrainError::InvalidConfig("no shapes to fit".into()));
    }
    let mut pools: Vec<Vec<GcPool>> = Vec::with_capacity(shapes.len());
    for (si, shape) in shapes.iter().enumerate() {
        if shape.samples.per_gc.len() != shape.scene.gcs.len() {
            return Err(TrainError::MissingSamples { shape: si, gc: shape.samples.per_gc.len() });
        }
        let mut gcs = Vec::new();
        for (gi, samples) in shape.samples.per_gc.iter().enumerate() {
            if samples.is_empty() {
                return Err(TrainError::MissingSamples { shape: si, gc: gi });
            }
            let latent = shape.scene.latent_of(gi)?;
            if latent >= model.n_latents() {
                return Err(ModelError::BadIndex { index: latent, count: model.n_latents() }.into());
            }
            let (space, surface): (Vec<usize>, Vec<usize>) =
                (0..samples.len()).partition(|&k| samples[k].kind == SampleKind::Space);
            gcs.push(GcPool { latent, space, surface });
        }
        pools.push(gcs);
    }

    model.set_config_hash(cfg.hash());
    let adam = AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() };
    let mut shared_opt = AdamState::for_tensors(&model.shared_tensors(), adam);
    let mut latent_opt = AdamState::new(&[model.latents().len()], adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = TrainReport::default();
    let total_epochs = cfg.epochs + cfg.phase2();

    for epoch in 0..total_epochs {
        let phase = if epoch < cfg.epochs { Phase::Joint } else { Phase::LatentOnly };
        let (mut loss_sum, mut data_sum) = (0.0, 0.0);
        for _ in 0..cfg.iterations_per_epoch {
            let batch = draw_batch(shapes, &pools, cfg, &mut rng);
            let (loss, grads) = match model.compute_loss(&batch, cfg.lambda) {
                Ok(v) => v,
                Err(ModelError::NonFiniteLoss) => return Err(TrainError::Diverged { epoch, report }),
                Err(e) => return Err(e.into()),
            };
            loss_sum += f64::from(loss.total);
            data_sum += f64::from(loss.data);
            let latent_grad = [grads.latents.as_slice().expect("contiguous")];
            let stepped = if phase == Phase::Joint {
                shared_opt.step(model.shared_tensors_mut(), &grads.shared_tensors())
            } else {
                Ok(())
            };
            if stepped.and_then(|_| latent_opt.step(vec![model.latent_tensor_mut()], &latent_grad)).is_err() {
                return Err(TrainError::Diverged { epoch, report });
            }
        }
        let n = cfg.iterations_per_epoch as f64;
        report.history.push(EpochRecord { epoch, phase, loss: loss_sum / n, data_loss: data_sum / n });
        log::debug!("epoch {epoch} {phase:?} loss {:.6}", loss_sum / n);
        progress((epoch + 1) as f64 / total_epochs as f64);
    }
    Ok(report)
}

fn draw_batch(shapes: &[TrainingShape], pools: &[Vec<GcPool>], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Batch<f32> {
    let picked: Vec<usize> = if cfg.shapes_per_batch >= shapes.len() {
        (0..shapes.len()).collect()
    } else {
        let mut v = sample_indices(rng, shapes.len(), cfg.shapes_per_batch).into_vec();
        v.sort_unstable();
        v
    };
    let mut groups = Vec::new();
    for si in picked {
        let n_gc = pools[si].len();
        let space_each = cfg.space_samples.div_ceil(n_gc);
        let surface_each = cfg.surface_samples.div_ceil(n_gc);
        for (gi, pool) in pools[si].iter().enumerate() {
            let samples = &shapes[si].samples.per_gc[gi];
            let mut coords = Vec::with_capacity(space_each + surface_each);
            let mut targets = Vec::with_capacity(space_each + surface_each);
            for (wanted, primary, other) in [(space_each, &pool.space, &pool.surface), (surface_each, &pool.surface, &pool.space)] {
                let src = if primary.is_empty() { other } else { primary };
                for _ in 0..wanted {
                    let s = &samples[src[rng.random_range(0..src.len())]];
                    coords.push(s.coords);
                    targets.push(s.sdf as f32);
                }
            }
            groups.push(BatchGroup { latent: pool.latent, coords, targets });
        }
    }
    Batch { groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RelativeCoords;
    use crate::ingest::Sample;
    use crate::model::ModelConfig;
    use crate::shapes;

    /// Samples of an analytic field directly in relative coordinates.
    fn toy_samples() -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let samples = (0..400)
            .map(|k| {
                let (a, b): (f64, f64) = (rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
                let rc = RelativeCoords::new(rng.random_range(0.0..1.0), a, b);
                let kind = if k % 2 == 0 { SampleKind::Space } else { SampleKind::Surface };
                Sample { coords: rc, sdf: 0.2 * ((a * a + b * b).sqrt() - 0.5), kind }
            })
            .collect();
        SampleSet { per_gc: vec![samples] }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 20,
            iterations_per_epoch: 5,
            shapes_per_batch: 1,
            space_samples: 64,
            surface_samples: 64,
            phase2_epochs: Some(5),
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn run() -> (NgcModel<f32>, TrainReport, NgcModel<f32>) {
        let scene = Scene::new("toy", vec![shapes::straight_gc(-0.5, 0.5, 0.2)], 0);
        let samples = toy_samples();
        let mut model = NgcModel::new(ModelConfig::with_width(16), 1, 1).unwrap();
        let init = model.clone();
        let cfg = cfg();
        let report = train(&mut model, &[TrainingShape { scene: &scene, samples: &samples }], &cfg, &mut |_| {}).unwrap();
        (model, report, init)
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let (m1, r1, _) = run();
        let (m2, r2, _) = run();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
        assert_eq!(r1.history.len(), 25);
        assert!(r1.history[19].loss < r1.history[0].loss);
    }

    #[test]
    fn phase_two_freezes_network() {
        let scene = Scene::new("toy", vec![shapes::straight_gc(-0.5, 0.5, 0.2)], 0);
        let samples = toy_samples();
        let mut model = NgcModel::new(ModelConfig::with_width(16), 1, 1).unwrap();
        let phase1 = TrainConfig { phase2_epochs: Some(0), ..cfg() };
        train(&mut model, &[TrainingShape { scene: &scene, samples: &samples }], &phase1, &mut |_| {}).unwrap();
        let before = model.clone();
        let phase2_only = TrainConfig { epochs: 0, phase2_epochs: Some(5), ..cfg() };
        let r = train(&mut model, &[TrainingShape { scene: &scene, samples: &samples }], &phase2_only, &mut |_| {}).unwrap();
        assert!(r.history.iter().all(|e| e.phase == Phase::LatentOnly));
        assert_eq!(model.mlps(), before.mlps());
        assert_ne!(model.latents(), before.latents());
    }

    #[test]
    fn hash_depends_on_config() {
        let a = TrainConfig::default();
        let b = TrainConfig { lambda: 2e-4, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
        assert_eq!(a.phase2(), 1000);
    }

    #[test]
    fn missing_samples_rejected() {
        let scene = Scene::new("toy", vec![shapes::straight_gc(-0.5, 0.5, 0.2)], 0);
        let samples = SampleSet { per_gc: vec![vec![]] };
        let mut model = NgcModel::new(ModelConfig::with_width(8), 1, 1).unwrap();
        let r = train(&mut model, &[TrainingShape { scene: &scene, samples: &samples }], &cfg(), &mut |_| {});
        assert!(matches!(r, Err(TrainError::MissingSamples { shape: 0, gc: 0 })));
    }
}
