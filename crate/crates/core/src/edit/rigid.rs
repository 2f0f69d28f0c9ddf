use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};

use super::EditError;

/// Least-squares rigid motion taking `src` onto `dst` (Kabsch with reflection
/// correction). Fewer than three non-collinear points only determine a
/// translation, which is returned with the identity rotation.
pub fn estimate_rigid(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<Isometry3<f64>, EditError> {
    if src.is_empty() {
        return Err(EditError::NoHandles);
    }
    if src.len() != dst.len() {
        return Err(EditError::MismatchedHandles(src.len(), dst.len()));
    }
    if src.iter().chain(dst).any(|p| !p.coords.iter().all(|v| v.is_finite())) {
        return Err(EditError::NonFinite);
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s.coords - cs, d.coords - cd);
        h += a * b.transpose();
        spread += a * a.transpose();
    }
    let scale = spread.trace().max(f64::MIN_POSITIVE);
    let sv = spread.symmetric_eigenvalues();
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(f64::total_cmp);
    // second largest spread direction vanishes for collinear or coincident handles
    if src.len() < 3 || sorted[1] <= 1e-12 * scale {
        return Ok(Isometry3::from_parts(Translation3::from(cd - cs), UnitQuaternion::identity()));
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let rot = Rotation3::from_matrix_unchecked(r);
    let t = cd - rot * cs;
    Ok(Isometry3::from_parts(Translation3::from(t), UnitQuaternion::from_rotation_matrix(&rot)))
}

/// Sum of squared residuals of `iso` on the pairs.
pub fn rigid_residual(iso: &Isometry3<f64>, src: &[Point3<f64>], dst: &[Point3<f64>]) -> f64 {
    src.iter().zip(dst).map(|(s, d)| (iso * s - d).norm_squared()).sum()
}
