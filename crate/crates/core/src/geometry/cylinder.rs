//! Generalized cylinders with oval profiles and the relative coordinate system.

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::curve::{CurveSpec, DiscretizedCurve, DEFAULT_CURVE_SEGMENTS};
use super::frame::{interpolate, KeyFrame, LocalFrame};
use super::GeometryError;

/// Relative tolerance under which two closest-point distances count as tied.
pub const TIE_TOLERANCE: f64 = 1e-3;

/// Position inside a cylinder: curve parameter plus radius-normalized
/// offsets along the profile's y and z axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeCoords {
    pub t: f64,
    pub a: f64,
    pub b: f64,
}

impl RelativeCoords {
    pub fn new(t: f64, a: f64, b: f64) -> Self {
        Self { t, a, b }
    }

    /// Oval condition of the profile.
    pub fn in_profile(&self) -> bool {
        self.a * self.a + self.b * self.b <= 1.0
    }
}

/// A closest-point candidate produced by [`GeneralizedCylinder::world_to_relative`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub coords: RelativeCoords,
    /// Distance from the query to the curve point.
    pub distance: f64,
    /// The closest point is a curve endpoint and the query lies beyond its end plane.
    pub beyond_end: bool,
}

impl Candidate {
    pub fn in_volume(&self) -> bool {
        !self.beyond_end && self.coords.in_profile()
    }
}

/// A generalized cylinder: a central curve plus key frames carrying oval
/// radii and orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedCylinder {
    spec: CurveSpec,
    curve: DiscretizedCurve,
    keyframes: Vec<KeyFrame>,
}

impl GeneralizedCylinder {
    pub fn new(spec: CurveSpec, keyframes: Vec<KeyFrame>) -> Result<Self, GeometryError> {
        let curve = spec.discretize(DEFAULT_CURVE_SEGMENTS)?;
        Self::from_parts(spec, curve, keyframes)
    }

    pub fn with_resolution(spec: CurveSpec, segments: usize, keyframes: Vec<KeyFrame>) -> Result<Self, GeometryError> {
        let curve = spec.discretize(segments)?;
        Self::from_parts(spec, curve, keyframes)
    }

    /// Assembles a cylinder from an already discretized curve.
    pub fn from_parts(spec: CurveSpec, curve: DiscretizedCurve, keyframes: Vec<KeyFrame>) -> Result<Self, GeometryError> {
        if keyframes.len() < 2 {
            return Err(GeometryError::TooFewKeyframes(keyframes.len()));
        }
        if keyframes[0].t != 0.0 || keyframes[keyframes.len() - 1].t != 1.0 {
            return Err(GeometryError::KeyframeCoverage);
        }
        if keyframes.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(GeometryError::UnsortedKeyframes);
        }
        Ok(Self { spec, curve, keyframes })
    }

    /// The unit x-axis segment with unit radii and identity frames, on which
    /// world and relative coordinates coincide.
    pub fn canonical() -> Self {
        let spec = CurveSpec::line(Point3::origin(), Point3::new(1.0, 0.0, 0.0));
        Self::new(spec, vec![KeyFrame::identity(0.0, 1.0, 1.0), KeyFrame::identity(1.0, 1.0, 1.0)])
            .expect("canonical cylinder is valid")
    }

    pub fn spec(&self) -> &CurveSpec {
        &self.spec
    }

    pub fn curve(&self) -> &DiscretizedCurve {
        &self.curve
    }

    pub fn keyframes(&self) -> &[KeyFrame] {
        &self.keyframes
    }

    /// Interpolated frame: radii by Lerp and rotation by shortest-arc Slerp
    /// between the bracketing key frames.
    pub fn frame_at(&self, t: f64) -> LocalFrame {
        let clamped = !(0.0..=1.0).contains(&t);
        let t = t.clamp(0.0, 1.0);
        let (r_y, r_z, rot) = interpolate(&self.keyframes, t);
        let m = rot.matrix();
        LocalFrame {
            origin: self.curve.point_at(t),
            x: Unit::new_unchecked(m.column(0).into_owned()),
            y: Unit::new_unchecked(m.column(1).into_owned()),
            z: Unit::new_unchecked(m.column(2).into_owned()),
            r_y,
            r_z,
            clamped,
        }
    }

    /// Frame of the profile plane at `t` on polyline segment `seg`: the
    /// interpolated frame minimally rotated so its x axis is the segment
    /// direction. Profiles are therefore exactly orthogonal to the polyline.
    fn profile_frame(&self, t: f64, seg: usize) -> LocalFrame {
        let mut f = self.frame_at(t);
        let dir = self.curve.segment_direction(seg);
        let cross = f.x.cross(&dir);
        let align = if cross.norm() <= 1e-12 && f.x.dot(&dir) > 0.0 {
            Rotation3::identity()
        } else {
            Rotation3::rotation_between(&f.x, &dir)
                .filter(|r| r.matrix().iter().all(|v| v.is_finite()))
                // antiparallel: half turn about the frame's y axis
                .unwrap_or_else(|| Rotation3::from_axis_angle(&f.y, std::f64::consts::PI))
        };
        f.origin = self.curve.point_on_segment(seg, t);
        f.x = dir;
        f.y = Unit::new_normalize(align * f.y.into_inner());
        f.z = Unit::new_normalize(dir.cross(&f.y));
        f
    }

    /// Frame used by the coordinate mapping at `t`.
    pub fn mapping_frame(&self, t: f64) -> LocalFrame {
        let t = t.clamp(0.0, 1.0);
        self.profile_frame(t, self.curve.segment_at(t))
    }

    /// Maps relative coordinates back to world space.
    pub fn relative_to_world(&self, rc: &RelativeCoords) -> Point3<f64> {
        let f = self.mapping_frame(rc.t);
        f.origin + f.y.into_inner() * (rc.a * f.r_y) + f.z.into_inner() * (rc.b * f.r_z)
    }

    /// All near-tied local minima of the distance from `q` to the polyline,
    /// each expressed in relative coordinates.
    pub fn world_to_relative(&self, q: &Point3<f64>) -> Vec<Candidate> {
        let verts = self.curve.vertices();
        let nseg = verts.len() - 1;
        // (segment, local s, distance, beyond_end)
        let mut minima: Vec<(usize, f64, f64, bool)> = Vec::new();
        let mut prev_clamped_hi = false;
        for k in 0..nseg {
            let a = verts[k];
            let d = verts[k + 1] - a;
            let len2 = d.norm_squared();
            let raw = (q - a).dot(&d) / len2;
            let s = raw.clamp(0.0, 1.0);
            if raw > 0.0 && raw < 1.0 {
                let dist = (q - (a + d * s)).norm();
                minima.push((k, s, dist, false));
            } else if raw <= 0.0 {
                if k == 0 {
                    minima.push((0, 0.0, (q - a).norm(), raw < 0.0));
                } else if prev_clamped_hi {
                    // interior vertex k is a local minimum
                    minima.push((k, 0.0, (q - a).norm(), false));
                }
            }
            prev_clamped_hi = raw >= 1.0;
            if k == nseg - 1 && raw >= 1.0 {
                minima.push((k, 1.0, (q - verts[k + 1]).norm(), raw > 1.0));
            }
        }
        let best = minima.iter().map(|m| m.2).fold(f64::INFINITY, f64::min);
        let limit = best * (1.0 + TIE_TOLERANCE);
        let params = self.curve.params();
        minima
            .into_iter()
            .filter(|m| m.2 <= limit)
            .map(|(k, s, distance, beyond_end)| {
                let t = if s == 1.0 { params[k + 1] } else { params[k] + s * (params[k + 1] - params[k]) };
                let f = self.profile_frame(t, k);
                let off = q - f.origin;
                let coords = RelativeCoords::new(t, off.dot(&f.y) / f.r_y, off.dot(&f.z) / f.r_z);
                Candidate { coords, distance, beyond_end }
            })
            .collect()
    }

    /// Best in-volume candidate, if the point lies in some profile.
    pub fn contains(&self, q: &Point3<f64>) -> Option<Candidate> {
        self.world_to_relative(q)
            .into_iter()
            .filter(Candidate::in_volume)
            .min_by(|x, y| x.distance.total_cmp(&y.distance))
    }

    /// Largest profile radius anywhere on the cylinder.
    pub fn max_radius(&self) -> f64 {
        self.keyframes.iter().map(|k| k.r_y.max(k.r_z)).fold(0.0, f64::max)
    }

    /// Replaces the key frames, keeping the curve.
    pub fn with_keyframes(&self, keyframes: Vec<KeyFrame>) -> Result<Self, GeometryError> {
        Self::from_parts(self.spec.clone(), self.curve.clone(), keyframes)
    }

    /// Replaces the curve. The new polyline inherits this cylinder's mapping
    /// from arc-length fraction to parameter, so reparameterizations survive.
    pub fn with_spec(&self, spec: CurveSpec) -> Result<Self, GeometryError> {
        let fresh = spec.discretize(self.curve.segment_count().max(2))?;
        let curve = if self.is_arc_length_parameterized() {
            fresh
        } else {
            let old_frac = self.curve.arc_fractions();
            let old_params = self.curve.params();
            let mut params: Vec<f64> = fresh
                .params()
                .iter()
                .map(|&s| piecewise_linear(&old_frac, old_params, s))
                .collect();
            let last = params.len() - 1;
            params[0] = 0.0;
            params[last] = 1.0;
            fresh.with_params(params)?
        };
        Self::from_parts(spec, curve, self.keyframes.clone())
    }

    pub(crate) fn with_curve(&self, curve: DiscretizedCurve, keyframes: Vec<KeyFrame>) -> Result<Self, GeometryError> {
        Self::from_parts(self.spec.clone(), curve, keyframes)
    }

    pub fn is_arc_length_parameterized(&self) -> bool {
        self.curve
            .arc_fractions()
            .iter()
            .zip(self.curve.params())
            .all(|(a, b)| (a - b).abs() <= 1e-12)
    }

    /// Tangent of the polyline at `t`.
    pub fn tangent(&self, t: f64) -> Unit<Vector3<f64>> {
        self.curve.tangent_at(t)
    }
}

/// Evaluates the monotone piecewise-linear function through `(xs[i], ys[i])`.
pub(crate) fn piecewise_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let s = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + s * (ys[i + 1] - ys[i])
}
