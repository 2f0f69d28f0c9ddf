//! Shape editing: handle-driven deformation, key frame edits,
//! reparameterization and feature/radius blending.

mod blend;
mod curve;
mod rigid;

pub use blend::{blend_radii, blend_weight, blended_features, blended_values, blended_values_with, query_blended_sdf, BlendSpec};
pub use curve::{hermite_bezier, solve_deformed_curve};
pub use rigid::{estimate_rigid, rigid_residual};

use nalgebra::{Isometry3, Point3, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{piecewise_linear, slerp, GeneralizedCylinder, GeometryError, KeyFrame};
use crate::model::{ModelError, Scene};

#[derive(Debug, Error)]
pub enum EditError {
    #[error("no handle pairs given")]
    NoHandles,
    #[error("{0} source handles but {1} targets")]
    MismatchedHandles(usize, usize),
    #[error("non-finite input")]
    NonFinite,
    #[error("length_infeasible: target length {target} is shorter than the chord {chord}")]
    LengthInfeasible { chord: f64, target: f64 },
    #[error("curve solver failed: {0}")]
    SolverFailed(String),
    #[error("reparameterization must be strictly increasing from (0, 0) to (1, 1)")]
    NonMonotone,
    #[error("GC index {index} out of range ({count} GCs)")]
    BadGc { index: usize, count: usize },
    #[error("key frame index {index} out of range ({count} key frames)")]
    BadKeyframe { index: usize, count: usize },
    #[error("GC {gc}: {source}")]
    InGc { gc: usize, source: Box<EditError> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl EditError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EditError::LengthInfeasible { .. } => "length_infeasible",
            EditError::InGc { source, .. } => source.code(),
            EditError::SolverFailed(_) => "solver_failed",
            EditError::NonMonotone => "non_monotone",
            EditError::Geometry(_) => "invalid_geometry",
            EditError::Model(_) => "model_error",
            _ => "invalid_edit",
        }
    }
}

/// Handle pairs (world space) and GCs that must not move.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HandleConstraint {
    pub handles: Vec<Handle>,
    #[serde(default)]
    pub fixed_gcs: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handle {
    pub src: Point3<f64>,
    pub dst: Point3<f64>,
}

/// GC and curve parameter nearest to `p` over the whole scene.
fn attribute(scene: &Scene, p: &Point3<f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, gc) in scene.gcs.iter().enumerate() {
        for c in gc.world_to_relative(p) {
            if best.is_none_or(|b| c.distance < b.2) {
                best = Some((i, c.coords.t, c.distance));
            }
        }
    }
    best.map(|b| (b.0, b.1))
}

fn is_identity(iso: &Isometry3<f64>) -> bool {
    iso.translation.vector == Vector3::zeros() && iso.rotation == UnitQuaternion::identity()
}

fn same_motion(a: &Isometry3<f64>, b: &Isometry3<f64>) -> bool {
    (a.to_homogeneous() - b.to_homogeneous()).abs().max() <= 1e-12
}

/// Deforms every GC that receives handles. Handles attach to the nearest
/// curve point; those on the first half of a curve drive its start and the
/// rest drive its end, each side through its own rigid fit (a side without
/// handles stays put). The curve is re-solved as a length-preserving
/// Hermite curve, radii are kept and frames are carried along by the
/// interpolated rotation. Latents are untouched.
pub fn apply_handle_deformation(scene: &Scene, constraints: &HandleConstraint) -> Result<Scene, EditError> {
    if constraints.handles.is_empty() {
        return Err(EditError::NoHandles);
    }
    let n = scene.gcs.len();
    for &f in &constraints.fixed_gcs {
        if f >= n {
            return Err(EditError::BadGc { index: f, count: n });
        }
    }
    // (start src, start dst, end src, end dst) per GC
    type Sides = (Vec<Point3<f64>>, Vec<Point3<f64>>, Vec<Point3<f64>>, Vec<Point3<f64>>);
    let mut sides: Vec<Sides> = vec![Default::default(); n];
    for h in &constraints.handles {
        let Some((gc, t)) = attribute(scene, &h.src) else { continue };
        if constraints.fixed_gcs.contains(&gc) {
            continue;
        }
        let s = &mut sides[gc];
        if t < 0.5 {
            s.0.push(h.src);
            s.1.push(h.dst);
        } else {
            s.2.push(h.src);
            s.3.push(h.dst);
        }
    }
    let mut out = scene.clone();
    for (i, (ss, sd, es, ed)) in sides.into_iter().enumerate() {
        if ss.is_empty() && es.is_empty() {
            continue;
        }
        let fit = |s: &[Point3<f64>], d: &[Point3<f64>]| {
            if s.is_empty() {
                Ok(Isometry3::identity())
            } else {
                estimate_rigid(s, d)
            }
        };
        let start = fit(&ss, &sd)?;
        let end = fit(&es, &ed)?;
        out.gcs[i] = deform_gc(&scene.gcs[i], &start, &end).map_err(|e| EditError::InGc { gc: i, source: Box::new(e) })?;
    }
    Ok(out)
}

/// Moves the start of `gc` by `start` and its end by `end`.
pub fn deform_gc(gc: &GeneralizedCylinder, start: &Isometry3<f64>, end: &Isometry3<f64>) -> Result<GeneralizedCylinder, EditError> {
    if is_identity(start) && is_identity(end) {
        return Ok(gc.clone());
    }
    if same_motion(start, end) {
        let spec = gc.spec().transformed(start);
        let rot = start.rotation.to_rotation_matrix();
        let kfs = gc.keyframes().iter().map(|k| KeyFrame { rot: rot * k.rot, ..*k }).collect();
        return Ok(gc.with_spec(spec)?.with_keyframes(kfs)?);
    }
    let curve = gc.curve();
    let p0 = start * curve.point_at(0.0);
    let p1 = end * curve.point_at(1.0);
    let x0 = Unit::new_normalize(start.rotation * gc.tangent(0.0).into_inner());
    let x1 = Unit::new_normalize(end.rotation * gc.tangent(1.0).into_inner());
    let spec = solve_deformed_curve(p0, p1, &x0, &x1, curve.total_length())?;
    let (r0, r1) = (start.rotation.to_rotation_matrix(), end.rotation.to_rotation_matrix());
    let kfs = gc.keyframes().iter().map(|k| KeyFrame { rot: slerp(&r0, &r1, k.t) * k.rot, ..*k }).collect();
    Ok(gc.with_spec(spec)?.with_keyframes(kfs)?)
}

/// Changes to one key frame. The rotation delta is applied in the key
/// frame's own axes, so a rotation about x twists the profile.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KeyframeEdit {
    pub r_y: Option<f64>,
    pub r_z: Option<f64>,
    pub rotation: Option<Rotation3<f64>>,
}

/// Applies `edit` to key frame `index`. When the rotation delta exceeds a
/// quarter turn, intermediate key frames are inserted halfway to each
/// neighbor so interpolation follows the intended direction.
pub fn edit_keyframe(gc: &GeneralizedCylinder, index: usize, edit: &KeyframeEdit) -> Result<GeneralizedCylinder, EditError> {
    let kfs = gc.keyframes();
    if index >= kfs.len() {
        return Err(EditError::BadKeyframe { index, count: kfs.len() });
    }
    let old = kfs[index];
    let delta = edit.rotation.unwrap_or_else(Rotation3::identity);
    let rot = old.rot * delta;
    let changed = KeyFrame::new(old.t, edit.r_y.unwrap_or(old.r_y), edit.r_z.unwrap_or(old.r_z), rot.into_inner())?;
    let mut out: Vec<KeyFrame> = kfs.to_vec();
    out[index] = changed;
    if delta.angle() > std::f64::consts::FRAC_PI_2 + 1e-12 {
        let half = slerp(&Rotation3::identity(), &delta, 0.5);
        let mut inserted = Vec::new();
        for nb in [index.checked_sub(1), Some(index + 1)].into_iter().flatten().filter(|&j| j < kfs.len()) {
            let t = 0.5 * (kfs[nb].t + old.t);
            let f = gc.frame_at(t);
            let w = (t - kfs[nb].t) / (old.t - kfs[nb].t);
            let r_y = f.r_y + w * (changed.r_y - old.r_y);
            let r_z = f.r_z + w * (changed.r_z - old.r_z);
            inserted.push(KeyFrame::new(t, r_y, r_z, (f.rotation() * half).into_inner())?);
        }
        out.extend(inserted);
        out.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    Ok(gc.with_keyframes(out)?)
}

/// Monotone piecewise-linear map `[0, 1] -> [0, 1]` through `knots`.
fn check_phi(knots: &[(f64, f64)]) -> Result<(), EditError> {
    let ok = knots.len() >= 2
        && knots[0] == (0.0, 0.0)
        && knots[knots.len() - 1] == (1.0, 1.0)
        && knots.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1);
    if ok {
        Ok(())
    } else {
        Err(EditError::NonMonotone)
    }
}

/// Reparameterizes the curve by `phi` (given as knots): polyline and key
/// frame parameters become `phi^-1` of their old values. Geometry stays put
/// while field content slides along the curve. Key frames are added at the
/// knots.
pub fn reparameterize(gc: &GeneralizedCylinder, knots: &[(f64, f64)]) -> Result<GeneralizedCylinder, EditError> {
    check_phi(knots)?;
    let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
    let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
    let inv = |t: f64| piecewise_linear(&ys, &xs, t);
    let params: Vec<f64> = gc.curve().params().iter().map(|&t| inv(t)).collect();
    let curve = gc.curve().with_params(params)?;
    // pin the profile at every knot so interpolation between knots is only
    // rescaled, never reshaped
    let mut kfs: Vec<KeyFrame> = gc.keyframes().to_vec();
    for &y in &ys[1..ys.len() - 1] {
        if !kfs.iter().any(|k| k.t == y) {
            let f = gc.frame_at(y);
            kfs.push(KeyFrame { t: y, r_y: f.r_y, r_z: f.r_z, rot: f.rotation() });
        }
    }
    kfs.sort_by(|a, b| a.t.total_cmp(&b.t));
    let kfs = kfs.into_iter().map(|k| KeyFrame { t: inv(k.t), ..k }).collect();
    Ok(gc.with_curve(curve, kfs)?)
}
