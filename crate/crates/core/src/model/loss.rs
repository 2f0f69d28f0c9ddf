use ndarray::{concatenate, s, Array2, Axis, Zip};

use super::{coords_matrix, interpolate_row, ModelError, NgcModel};
use crate::geometry::RelativeCoords;
use crate::nn::{encode_batch, MlpGrads, Scalar};

/// Samples of one GC inside a training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGroup<S> {
    pub latent: usize,
    pub coords: Vec<RelativeCoords>,
    pub targets: Vec<S>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch<S> {
    pub groups: Vec<BatchGroup<S>>,
}

impl<S> Batch<S> {
    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.coords.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue<S> {
    pub total: S,
    /// Mean over groups of the mean absolute SDF error.
    pub data: S,
    /// `lambda` times the mean squared latent norm.
    pub regularization: S,
}

/// Gradients for every model parameter; latent rows not in the batch are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads<S> {
    pub mlp0: MlpGrads<S>,
    pub mlp1: MlpGrads<S>,
    pub g: MlpGrads<S>,
    pub h: MlpGrads<S>,
    pub latents: Array2<S>,
}

impl<S: Scalar> ModelGrads<S> {
    pub fn shared_tensors(&self) -> Vec<&[S]> {
        let mut out = self.mlp0.tensors();
        out.extend(self.mlp1.tensors());
        out.extend(self.g.tensors());
        out.extend(self.h.tensors());
        out
    }

    /// Same order as [`NgcModel::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[S]> {
        let mut out = self.shared_tensors();
        out.push(self.latents.as_slice().expect("contiguous"));
        out
    }
}

impl<S: Scalar> NgcModel<S> {
    /// Auto-decoder objective and its exact gradient.
    pub fn compute_loss(&self, batch: &Batch<S>, lambda: f64) -> Result<(LossValue<S>, ModelGrads<S>), ModelError> {
        let groups: Vec<&BatchGroup<S>> = batch.groups.iter().filter(|g| !g.coords.is_empty()).collect();
        if groups.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        for g in &groups {
            self.check_index(g.latent)?;
            if g.targets.len() != g.coords.len() {
                return Err(ModelError::InvalidConfig("batch group has mismatched targets".into()));
            }
        }
        let n_groups = S::lit(groups.len() as f64);
        let width = self.config.width;
        let lambda_s = S::lit(lambda);

        // endpoint features, one row per group
        let latent_ids: Vec<usize> = groups.iter().map(|g| g.latent).collect();
        let z = self.latents.select(Axis(0), &latent_ids);
        let (e0, cache0) = self.mlp0.forward(z.view())?;
        let (e1, cache1) = self.mlp1.forward(z.view())?;

        let rows: usize = groups.iter().map(|g| g.coords.len()).sum();
        let mut f = Array2::zeros((rows, width));
        let mut coords = Vec::with_capacity(rows);
        let mut targets = Vec::with_capacity(rows);
        let mut owner = Vec::with_capacity(rows);
        let mut r = 0;
        for (gi, g) in groups.iter().enumerate() {
            for (rc, &y) in g.coords.iter().zip(&g.targets) {
                f.row_mut(r).assign(&interpolate_row(e0.row(gi), e1.row(gi), S::lit(rc.t)));
                coords.push(*rc);
                targets.push(y);
                owner.push(gi);
                r += 1;
            }
        }
        let (u, cache_g) = self.g.forward(f.view())?;
        let enc = encode_batch(coords_matrix::<S>(&coords).view(), self.config.frequencies);
        let enc_dim = enc.ncols();
        let input = concatenate(Axis(1), &[enc.view(), u.view()]).expect("row counts agree");
        let (out, cache_h) = self.h.forward(input.view())?;

        // data term and its gradient with respect to the outputs
        let mut group_sums = vec![S::zero(); groups.len()];
        let mut d_out = Array2::zeros((rows, 1));
        for k in 0..rows {
            let gi = owner[k];
            let n = S::lit(groups[gi].coords.len() as f64);
            let err = out[[k, 0]] - targets[k];
            group_sums[gi] += err.abs() / n;
            d_out[[k, 0]] = sign(err) / (n * n_groups);
        }
        let data = group_sums.iter().copied().sum::<S>() / n_groups;
        let reg_sum: S = z.rows().into_iter().map(|row| row.iter().map(|&v| v * v).sum::<S>()).sum();
        let regularization = lambda_s * reg_sum / n_groups;
        let total = data + regularization;
        if !total.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }

        let (gh, d_in) = self.h.backward(&cache_h, d_out.view())?;
        let d_u = d_in.slice(s![.., enc_dim..]);
        let (gg, d_f) = self.g.backward(&cache_g, d_u)?;
        let mut d_e0 = Array2::zeros((groups.len(), width));
        let mut d_e1 = Array2::zeros((groups.len(), width));
        for k in 0..rows {
            let gi = owner[k];
            let t = S::lit(coords[k].t);
            let u = S::one() - t;
            Zip::from(d_e0.row_mut(gi)).and(d_f.row(k)).for_each(|a, &d| *a += t * d);
            Zip::from(d_e1.row_mut(gi)).and(d_f.row(k)).for_each(|a, &d| *a += u * d);
        }
        let (g0, d_z0) = self.mlp0.backward(&cache0, d_e0.view())?;
        let (g1, d_z1) = self.mlp1.backward(&cache1, d_e1.view())?;
        let mut latents = Array2::zeros(self.latents.dim());
        let reg_scale = S::lit(2.0) * lambda_s / n_groups;
        for (gi, &li) in latent_ids.iter().enumerate() {
            let mut row = latents.row_mut(li);
            row += &d_z0.row(gi);
            row += &d_z1.row(gi);
            row.scaled_add(reg_scale, &z.row(gi));
        }
        Ok((LossValue { total, data, regularization }, ModelGrads { mlp0: g0, mlp1: g1, g: gg, h: gh, latents }))
    }
}

fn sign<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        S::one()
    } else if x < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}
