use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::geometry::{GeneralizedCylinder, GeometryError, KeyFrame, RelativeCoords};
use crate::model::{ModelError, NgcModel};
use crate::nn::Scalar;

/// Truncated linear weight `clamp(a t + b, 0, 1)`.
pub fn blend_weight(a_coef: f64, b_coef: f64, t: f64) -> f64 {
    (a_coef * t + b_coef).clamp(0.0, 1.0)
}

/// Blend of GC `latent_a` (weight `w`) with `latent_b` (weight `1 - w`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendSpec {
    pub latent_a: usize,
    pub latent_b: usize,
    pub a_coef: f64,
    pub b_coef: f64,
    #[serde(default)]
    pub blend_radii: bool,
}

impl BlendSpec {
    pub fn weight(&self, t: f64) -> f64 {
        blend_weight(self.a_coef, self.b_coef, t)
    }
}

fn mix<S: Scalar>(ga: S, gb: S, w: S) -> S {
    if w >= S::one() {
        ga
    } else if w <= S::zero() {
        gb
    } else {
        gb + w * (ga - gb)
    }
}

/// Blended signed distances at `coords`. `model_b` must share the network of
/// `model_a`; the head of `model_a` decodes the mixed `g` outputs.
pub fn blended_values<S: Scalar>(
    model_a: &NgcModel<S>,
    model_b: &NgcModel<S>,
    spec: &BlendSpec,
    coords: &[RelativeCoords],
) -> Result<Vec<S>, ModelError> {
    blended_values_with(model_a, model_b, spec, coords, |t| spec.weight(t))
}

/// [`blended_values`] with an arbitrary weight function.
pub fn blended_values_with<S: Scalar>(
    model_a: &NgcModel<S>,
    model_b: &NgcModel<S>,
    spec: &BlendSpec,
    coords: &[RelativeCoords],
    weight: impl Fn(f64) -> f64,
) -> Result<Vec<S>, ModelError> {
    let g = blended_features(model_a, model_b, spec, coords, weight)?;
    model_a.head(coords, g.view())
}

/// Mixed `g` outputs `w g_A + (1 - w) g_B`, one row per coordinate. A weight
/// of 1 (or 0) returns the rows of A (or B) untouched.
pub fn blended_features<S: Scalar>(
    model_a: &NgcModel<S>,
    model_b: &NgcModel<S>,
    spec: &BlendSpec,
    coords: &[RelativeCoords],
    weight: impl Fn(f64) -> f64,
) -> Result<Array2<S>, ModelError> {
    if !model_a.shares_network_with(model_b) {
        return Err(ModelError::SharedMismatch);
    }
    let ts: Vec<f64> = coords.iter().map(|c| c.t).collect();
    let ga = model_a.g_features(spec.latent_a, &ts)?;
    let gb = model_b.g_features(spec.latent_b, &ts)?;
    let mut g = Array2::zeros(ga.raw_dim());
    Zip::from(g.rows_mut()).and(ga.rows()).and(gb.rows()).and(&ts).for_each(|mut row, a, b, &t| {
        let w = S::lit(weight(t));
        Zip::from(&mut row).and(&a).and(&b).for_each(|o, &x, &y| *o = mix(x, y, w));
    });
    Ok(g)
}

/// Single blended query.
pub fn query_blended_sdf<S: Scalar>(
    model_a: &NgcModel<S>,
    model_b: &NgcModel<S>,
    spec: &BlendSpec,
    rc: &RelativeCoords,
) -> Result<S, ModelError> {
    Ok(blended_values(model_a, model_b, spec, std::slice::from_ref(rc))?[0])
}

/// New radii for `gc_a`: at every key frame parameter of either cylinder the
/// aspect `(r_y, r_z) / mean` of A and B is mixed by `w(t)` and scaled back by
/// A's mean radius. Rotations follow A.
pub fn blend_radii(
    gc_a: &GeneralizedCylinder,
    gc_b: &GeneralizedCylinder,
    weight: impl Fn(f64) -> f64,
) -> Result<GeneralizedCylinder, GeometryError> {
    let mut ts: Vec<f64> = gc_a.keyframes().iter().chain(gc_b.keyframes()).map(|k| k.t).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let kfs = ts
        .into_iter()
        .map(|t| {
            let fa = gc_a.frame_at(t);
            let fb = gc_b.frame_at(t);
            let ma = 0.5 * (fa.r_y + fa.r_z);
            let mb = 0.5 * (fb.r_y + fb.r_z);
            let w = weight(t);
            let ny = w * fa.r_y / ma + (1.0 - w) * fb.r_y / mb;
            let nz = w * fa.r_z / ma + (1.0 - w) * fb.r_z / mb;
            KeyFrame::new(t, ny * ma, nz * ma, fa.rotation().into_inner())
        })
        .collect::<Result<Vec<_>, _>>()?;
    gc_a.with_keyframes(kfs)
}
