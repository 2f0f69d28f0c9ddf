use nalgebra::{Point3, Unit, Vector3};

use super::EditError;
use crate::geometry::{CubicSegment, CurveSpec, DEFAULT_CURVE_SEGMENTS};

/// Cubic Hermite curve with tangent magnitude `m` at both ends, in Bezier form.
pub fn hermite_bezier(p0: Point3<f64>, p1: Point3<f64>, x0: &Vector3<f64>, x1: &Vector3<f64>, m: f64) -> CurveSpec {
    let seg = CubicSegment::new([p0, p0 + x0 * (m / 3.0), p1 - x1 * (m / 3.0), p1]);
    CurveSpec::new(vec![seg]).expect("single finite segment")
}

fn length(spec: &CurveSpec) -> Result<f64, EditError> {
    Ok(spec.discretize(DEFAULT_CURVE_SEGMENTS)?.total_length())
}

/// Hermite curve through `p0`, `p1` with end directions `x0`, `x1` whose
/// discretized length matches `target` (relative tolerance 1e-6). The shared
/// tangent magnitude is found by bisection after doubling the bracket.
pub fn solve_deformed_curve(
    p0: Point3<f64>,
    p1: Point3<f64>,
    x0: &Unit<Vector3<f64>>,
    x1: &Unit<Vector3<f64>>,
    target: f64,
) -> Result<CurveSpec, EditError> {
    let chord = (p1 - p0).norm();
    if !(target.is_finite() && chord.is_finite()) {
        return Err(EditError::NonFinite);
    }
    if target < chord * (1.0 - 1e-9) || target <= 0.0 {
        return Err(EditError::LengthInfeasible { chord, target });
    }
    let tol = 1e-6 * target;
    let f = |m: f64| -> Result<(CurveSpec, f64), EditError> {
        let spec = hermite_bezier(p0, p1, x0, x1, m);
        let l = length(&spec)?;
        Ok((spec, l - target))
    };
    let mut hi = chord.max(1e-9 * target);
    let (mut spec_hi, mut f_hi) = f(hi)?;
    if f_hi.abs() <= tol {
        return Ok(spec_hi);
    }
    let mut lo = 0.0;
    let mut doublings = 0;
    while f_hi < 0.0 {
        if doublings == 32 {
            return Err(EditError::SolverFailed("length bracket not found".into()));
        }
        lo = hi;
        hi *= 2.0;
        (spec_hi, f_hi) = f(hi)?;
        doublings += 1;
        if f_hi.abs() <= tol {
            return Ok(spec_hi);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (spec, fm) = f(mid)?;
        if fm.abs() <= tol {
            return Ok(spec);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(EditError::SolverFailed("bisection did not converge".into()))
}
