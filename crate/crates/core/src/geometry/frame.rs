//! Key frames, their interpolation, and recursive frame propagation along a curve.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::curve::DiscretizedCurve;
use super::GeometryError;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Profile radii and local orientation pinned at a curve parameter.
///
/// The rotation's columns are the local x (tangent), y and z axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyFrame {
    pub t: f64,
    pub r_y: f64,
    pub r_z: f64,
    pub rot: Rotation3<f64>,
}

impl KeyFrame {
    pub fn new(t: f64, r_y: f64, r_z: f64, rot: Matrix3<f64>) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(GeometryError::ParameterOutOfDomain { value: t, end: 1.0 });
        }
        check_radii(r_y, r_z)?;
        check_rotation(&rot, ORTHONORMAL_TOL)?;
        Ok(Self { t, r_y, r_z, rot: Rotation3::from_matrix_unchecked(rot) })
    }

    pub fn identity(t: f64, r_y: f64, r_z: f64) -> Self {
        Self { t, r_y, r_z, rot: Rotation3::identity() }
    }
}

pub(crate) fn check_radii(r_y: f64, r_z: f64) -> Result<(), GeometryError> {
    if !(r_y > 0.0 && r_z > 0.0 && r_y.is_finite() && r_z.is_finite()) {
        return Err(GeometryError::NonPositiveRadius(r_y.min(r_z)));
    }
    Ok(())
}

/// Checks `m` is orthonormal with determinant +1 within `tol`.
pub fn check_rotation(m: &Matrix3<f64>, tol: f64) -> Result<(), GeometryError> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("rotation"));
    }
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    let det = m.determinant();
    if err > tol || (det - 1.0).abs() > tol {
        return Err(GeometryError::NotARotation { orthogonality_error: err, determinant: det });
    }
    Ok(())
}

/// Nearest rotation to `m` (polar decomposition), used to repair frames read from disk.
pub fn orthonormalize(m: &Matrix3<f64>) -> Result<Rotation3<f64>, GeometryError> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    check_rotation(&r, 1e-9)?;
    Ok(Rotation3::from_matrix_unchecked(r))
}

/// Shortest-arc spherical interpolation between two rotations.
pub fn slerp(a: &Rotation3<f64>, b: &Rotation3<f64>, s: f64) -> Rotation3<f64> {
    if s <= 0.0 {
        return *a;
    }
    if s >= 1.0 {
        return *b;
    }
    let qa = UnitQuaternion::from_rotation_matrix(a);
    let mut qb = UnitQuaternion::from_rotation_matrix(b);
    if qa.coords.dot(&qb.coords) < 0.0 {
        qb = UnitQuaternion::new_unchecked(-qb.into_inner());
    }
    let cos = qa.coords.dot(&qb.coords).min(1.0);
    let coords = if cos > 1.0 - 1e-12 {
        qa.coords * (1.0 - s) + qb.coords * s
    } else {
        let theta = cos.acos();
        let sin = theta.sin();
        qa.coords * (((1.0 - s) * theta).sin() / sin) + qb.coords * ((s * theta).sin() / sin)
    };
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(coords)).to_rotation_matrix()
}

/// An interpolated frame at a curve point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    pub origin: nalgebra::Point3<f64>,
    pub x: Unit<Vector3<f64>>,
    pub y: Unit<Vector3<f64>>,
    pub z: Unit<Vector3<f64>>,
    pub r_y: f64,
    pub r_z: f64,
    /// The requested parameter lay outside [0, 1] and was clamped.
    pub clamped: bool,
}

impl LocalFrame {
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[
            self.x.into_inner(),
            self.y.into_inner(),
            self.z.into_inner(),
        ]))
    }
}

/// Interpolated radii and rotation at `t` from a sorted key frame list.
pub(crate) fn interpolate(keyframes: &[KeyFrame], t: f64) -> (f64, f64, Rotation3<f64>) {
    // index of the first keyframe with kf.t >= t
    let hi = keyframes.partition_point(|k| k.t < t);
    if hi == 0 {
        let k = &keyframes[0];
        return (k.r_y, k.r_z, k.rot);
    }
    if hi == keyframes.len() {
        let k = &keyframes[keyframes.len() - 1];
        return (k.r_y, k.r_z, k.rot);
    }
    let (a, b) = (&keyframes[hi - 1], &keyframes[hi]);
    if t == b.t {
        return (b.r_y, b.r_z, b.rot);
    }
    let s = (t - a.t) / (b.t - a.t);
    let r_y = (1.0 - s) * a.r_y + s * b.r_y;
    let r_z = (1.0 - s) * a.r_z + s * b.r_z;
    (r_y, r_z, slerp(&a.rot, &b.rot, s))
}

/// Builds key frame rotations by recursive projection along the curve.
///
/// The first frame's z axis is `v0` with its tangent component removed;
/// each subsequent z axis is the previous one projected off the new tangent.
/// In every frame `y = z × x`.
pub fn propagate_frames(
    curve: &DiscretizedCurve,
    keyframe_ts: &[f64],
    v0: Vector3<f64>,
) -> Result<Vec<Rotation3<f64>>, GeometryError> {
    let mut out = Vec::with_capacity(keyframe_ts.len());
    let mut prev_z: Option<Vector3<f64>> = None;
    for (i, &t) in keyframe_ts.iter().enumerate() {
        let x = curve.tangent_at(t).into_inner();
        if !x.iter().all(|c| c.is_finite()) || x.norm() < 0.5 {
            return Err(GeometryError::ZeroTangent { t });
        }
        let seed = match prev_z {
            None => {
                let n = v0.norm();
                if n == 0.0 || !n.is_finite() {
                    return Err(GeometryError::ParallelInitialDirection);
                }
                let v = v0 / n;
                // angle between v0 and the tangent must exceed 1e-6 rad
                if v.cross(&x).norm() <= 1e-6 {
                    return Err(GeometryError::ParallelInitialDirection);
                }
                v
            }
            Some(z) => z,
        };
        let z_hat = seed - x * seed.dot(&x);
        let norm = z_hat.norm();
        if norm <= 1e-12 {
            return Err(GeometryError::FramePropagationFailed { keyframe: i });
        }
        let z = z_hat / norm;
        let y = z.cross(&x);
        out.push(Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])));
        prev_z = Some(z);
    }
    Ok(out)
}
