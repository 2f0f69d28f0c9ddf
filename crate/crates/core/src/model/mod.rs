//! The NGC network: per-GC latent codes, endpoint features interpolated
//! along the curve, and an SDF head on encoded relative coordinates.

mod io;
mod loss;
mod scene;
mod train;

pub use io::{MODEL_MAGIC, MODEL_VERSION};
pub use loss::{Batch, BatchGroup, LossValue, ModelGrads};
pub use scene::{Scene, OUTSIDE_SDF};
pub use train::{train, EpochRecord, Phase, TrainConfig, TrainError, TrainReport, TrainingShape};

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RelativeCoords;
use crate::nn::{encode_batch, encoded_dim, Mlp, NnError, Scalar, DEFAULT_FREQUENCIES, DEFAULT_SLOPE};

/// Standard deviation of freshly initialized latent codes.
pub const LATENT_INIT_STD: f64 = 0.01;

/// Rows evaluated per network call when querying many points.
const QUERY_CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("latent index {index} out of range ({count} latents)")]
    BadIndex { index: usize, count: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("models do not share network parameters")]
    SharedMismatch,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("model file is truncated")]
    Truncated,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::UnexpectedEof => ModelError::Truncated,
            _ => ModelError::Io(e),
        }
    }
}

/// Network sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden and feature width of every MLP.
    pub width: usize,
    pub latent_dim: usize,
    /// Positional-encoding frequency count.
    pub frequencies: usize,
    pub slope: f64,
}

impl ModelConfig {
    pub fn with_width(width: usize) -> Self {
        Self { width, latent_dim: width, frequencies: DEFAULT_FREQUENCIES, slope: DEFAULT_SLOPE }
    }

    /// Full-size network.
    pub fn full() -> Self {
        Self::with_width(512)
    }

    /// Network small enough to train on a laptop CPU.
    pub fn desk() -> Self {
        Self::with_width(128)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.width == 0 || self.latent_dim == 0 || self.frequencies == 0 {
            return Err(ModelError::InvalidConfig(format!("{self:?}")));
        }
        if !(self.slope.is_finite() && self.slope >= 0.0) {
            return Err(ModelError::InvalidConfig(format!("slope {}", self.slope)));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Shared MLPs plus one latent code per GC.
#[derive(Clone, Debug, PartialEq)]
pub struct NgcModel<S = f32> {
    config: ModelConfig,
    pub(crate) mlp0: Mlp<S>,
    pub(crate) mlp1: Mlp<S>,
    pub(crate) g: Mlp<S>,
    pub(crate) h: Mlp<S>,
    latents: Array2<S>,
    config_hash: [u8; 32],
}

impl<S: Scalar> NgcModel<S> {
    pub fn new(config: ModelConfig, n_latents: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.width;
        let slope = config.slope;
        let mlp0 = Mlp::new(&[config.latent_dim, w, w, w], slope, &mut rng);
        let mlp1 = Mlp::new(&[config.latent_dim, w, w, w], slope, &mut rng);
        let g = Mlp::new(&[w, w, w, w], slope, &mut rng);
        let h = Mlp::new(&[encoded_dim(config.frequencies) + w, w, w, w, w, 1], slope, &mut rng);
        let normal = Normal::new(0.0, LATENT_INIT_STD).expect("valid std");
        let latents = Array2::from_shape_simple_fn((n_latents, config.latent_dim), || S::lit(normal.sample(&mut rng)));
        Ok(Self { config, mlp0, mlp1, g, h, latents, config_hash: [0; 32] })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        mlps: [Mlp<S>; 4],
        latents: Array2<S>,
        config_hash: [u8; 32],
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let [mlp0, mlp1, g, h] = mlps;
        let w = config.width;
        let expect = |m: &Mlp<S>, widths: Vec<usize>| m.widths() == widths;
        if !expect(&mlp0, vec![config.latent_dim, w, w, w])
            || !expect(&mlp1, vec![config.latent_dim, w, w, w])
            || !expect(&g, vec![w, w, w, w])
            || !expect(&h, vec![encoded_dim(config.frequencies) + w, w, w, w, w, 1])
            || latents.ncols() != config.latent_dim
        {
            return Err(ModelError::InvalidConfig("layer widths do not match the configuration".into()));
        }
        Ok(Self { config, mlp0, mlp1, g, h, latents, config_hash })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &[u8; 32] {
        &self.config_hash
    }

    pub fn set_config_hash(&mut self, hash: [u8; 32]) {
        self.config_hash = hash;
    }

    pub fn n_latents(&self) -> usize {
        self.latents.nrows()
    }

    pub fn latents(&self) -> ArrayView2<'_, S> {
        self.latents.view()
    }

    pub fn latent(&self, index: usize) -> Result<ArrayView1<'_, S>, ModelError> {
        self.check_index(index)?;
        Ok(self.latents.row(index))
    }

    pub fn set_latent(&mut self, index: usize, value: ArrayView1<S>) -> Result<(), ModelError> {
        self.check_index(index)?;
        if value.len() != self.config.latent_dim {
            return Err(NnError::WidthMismatch { expected: self.config.latent_dim, got: value.len() }.into());
        }
        self.latents.row_mut(index).assign(&value);
        Ok(())
    }

    /// Appends a latent code and returns its index.
    pub fn push_latent(&mut self, value: ArrayView1<S>) -> Result<usize, ModelError> {
        if value.len() != self.config.latent_dim {
            return Err(NnError::WidthMismatch { expected: self.config.latent_dim, got: value.len() }.into());
        }
        self.latents.push_row(value).expect("width checked");
        Ok(self.latents.nrows() - 1)
    }

    fn check_index(&self, index: usize) -> Result<(), ModelError> {
        if index >= self.n_latents() {
            return Err(ModelError::BadIndex { index, count: self.n_latents() });
        }
        Ok(())
    }

    /// The shared MLPs in storage order.
    pub fn mlps(&self) -> [&Mlp<S>; 4] {
        [&self.mlp0, &self.mlp1, &self.g, &self.h]
    }

    /// Parameter tensors of the shared MLPs.
    pub fn shared_tensors(&self) -> Vec<&[S]> {
        self.mlps().into_iter().flat_map(Mlp::tensors).collect()
    }

    pub fn shared_tensors_mut(&mut self) -> Vec<&mut [S]> {
        let mut out = self.mlp0.tensors_mut();
        out.extend(self.mlp1.tensors_mut());
        out.extend(self.g.tensors_mut());
        out.extend(self.h.tensors_mut());
        out
    }

    /// Shared tensors followed by the latent matrix.
    pub fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        let mut out = self.mlp0.tensors_mut();
        out.extend(self.mlp1.tensors_mut());
        out.extend(self.g.tensors_mut());
        out.extend(self.h.tensors_mut());
        out.push(self.latents.as_slice_mut().expect("latents are contiguous"));
        out
    }

    pub fn latent_tensor_mut(&mut self) -> &mut [S] {
        self.latents.as_slice_mut().expect("latents are contiguous")
    }

    /// True when both models carry identical shared parameters.
    pub fn shares_network_with(&self, other: &Self) -> bool {
        self.config == other.config && self.mlps() == other.mlps()
    }

    pub fn cast<T: Scalar>(&self) -> NgcModel<T> {
        NgcModel {
            config: self.config,
            mlp0: self.mlp0.cast(),
            mlp1: self.mlp1.cast(),
            g: self.g.cast(),
            h: self.h.cast(),
            latents: self.latents.map(|x| T::from_f64(x.to_f64().unwrap()).unwrap()),
            config_hash: self.config_hash,
        }
    }

    /// `MLP0(z)` and `MLP1(z)` for the given latents, one row each.
    fn endpoint_features(&self, latents: &[usize]) -> Result<(Array2<S>, Array2<S>), ModelError> {
        for &i in latents {
            self.check_index(i)?;
        }
        let z = self.latents.select(Axis(0), latents);
        Ok((self.mlp0.predict(z.view())?, self.mlp1.predict(z.view())?))
    }

    /// `f(t) = t MLP0(z) + (1 - t) MLP1(z)`.
    pub fn feature_at(&self, latent: usize, t: f64) -> Result<Array1<S>, ModelError> {
        let (e0, e1) = self.endpoint_features(&[latent])?;
        let t = S::lit(t.clamp(0.0, 1.0));
        Ok(interpolate_row(e0.row(0), e1.row(0), t))
    }

    /// Output of `g` on the interpolated features at each `t`.
    pub fn g_features(&self, latent: usize, ts: &[f64]) -> Result<Array2<S>, ModelError> {
        let (e0, e1) = self.endpoint_features(&[latent])?;
        let mut f = Array2::zeros((ts.len(), self.config.width));
        for (mut row, &t) in f.rows_mut().into_iter().zip(ts) {
            row.assign(&interpolate_row(e0.row(0), e1.row(0), S::lit(t.clamp(0.0, 1.0))));
        }
        Ok(self.g.predict(f.view())?)
    }

    /// Runs `h` on encoded coordinates next to precomputed `g` outputs.
    pub fn head(&self, coords: &[RelativeCoords], g_out: ArrayView2<S>) -> Result<Vec<S>, ModelError> {
        let c = coords_matrix::<S>(coords);
        let enc = encode_batch(c.view(), self.config.frequencies);
        let input = concatenate(Axis(1), &[enc.view(), g_out])
            .map_err(|_| NnError::WidthMismatch { expected: coords.len(), got: g_out.nrows() })?;
        Ok(self.h.predict(input.view())?.column(0).to_vec())
    }

    /// Signed distance at relative coordinates of the GC owning `latent`.
    pub fn query_relative(&self, latent: usize, rc: &RelativeCoords) -> Result<S, ModelError> {
        Ok(self.query_relative_batch(&[(latent, *rc)])?[0])
    }

    /// Batched [`NgcModel::query_relative`]; every row's value is independent
    /// of the rest of the batch.
    pub fn query_relative_batch(&self, queries: &[(usize, RelativeCoords)]) -> Result<Vec<S>, ModelError> {
        let mut out = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(QUERY_CHUNK) {
            out.extend(self.query_chunk(chunk)?);
        }
        Ok(out)
    }

    fn query_chunk(&self, queries: &[(usize, RelativeCoords)]) -> Result<Vec<S>, ModelError> {
        let mut unique: Vec<usize> = queries.iter().map(|q| q.0).collect();
        unique.sort_unstable();
        unique.dedup();
        let (e0, e1) = self.endpoint_features(&unique)?;
        let mut f = Array2::zeros((queries.len(), self.config.width));
        for (mut row, (latent, rc)) in f.rows_mut().into_iter().zip(queries) {
            let k = unique.binary_search(latent).expect("collected above");
            row.assign(&interpolate_row(e0.row(k), e1.row(k), S::lit(rc.t)));
        }
        let u = self.g.predict(f.view())?;
        let coords: Vec<RelativeCoords> = queries.iter().map(|q| q.1).collect();
        self.head(&coords, u.view())
    }
}

fn interpolate_row<S: Scalar>(e0: ArrayView1<S>, e1: ArrayView1<S>, t: S) -> Array1<S> {
    let u = S::one() - t;
    ndarray::Zip::from(&e0).and(&e1).map_collect(|&a, &b| t * a + u * b)
}

pub(crate) fn coords_matrix<S: Scalar>(coords: &[RelativeCoords]) -> Array2<S> {
    let mut c = Array2::zeros((coords.len(), 3));
    for (mut row, rc) in c.rows_mut().into_iter().zip(coords) {
        row[0] = S::lit(rc.t);
        row[1] = S::lit(rc.a);
        row[2] = S::lit(rc.b);
    }
    c
}
