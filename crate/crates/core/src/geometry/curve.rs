//! Composite cubic Bezier curves and their arc-length parameterized polyline.

use nalgebra::{Isometry3, Point3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Default number of polyline segments used when discretizing a curve.
pub const DEFAULT_CURVE_SEGMENTS: usize = 512;

/// One cubic Bezier segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicSegment {
    pub control: [Point3<f64>; 4],
}

impl CubicSegment {
    pub fn new(control: [Point3<f64>; 4]) -> Self {
        Self { control }
    }

    /// Degree-elevated straight segment.
    pub fn line(a: Point3<f64>, b: Point3<f64>) -> Self {
        Self::new([a, a + (b - a) / 3.0, a + (b - a) * (2.0 / 3.0), b])
    }

    /// Degree-elevated quadratic segment.
    pub fn quadratic(p0: Point3<f64>, p1: Point3<f64>, p2: Point3<f64>) -> Self {
        let c1 = p0 + (p1 - p0) * (2.0 / 3.0);
        let c2 = p2 + (p1 - p2) * (2.0 / 3.0);
        Self::new([p0, c1, c2, p2])
    }

    /// Bernstein-basis evaluation at `u` in [0, 1].
    pub fn point(&self, u: f64) -> Point3<f64> {
        let v = 1.0 - u;
        let [p0, p1, p2, p3] = self.control;
        let c = p0.coords * (v * v * v)
            + p1.coords * (3.0 * v * v * u)
            + p2.coords * (3.0 * v * u * u)
            + p3.coords * (u * u * u);
        Point3::from(c)
    }

    pub fn derivative(&self, u: f64) -> Vector3<f64> {
        let v = 1.0 - u;
        let [p0, p1, p2, p3] = self.control;
        (p1 - p0) * (3.0 * v * v) + (p2 - p1) * (6.0 * v * u) + (p3 - p2) * (3.0 * u * u)
    }
}

/// An ordered chain of C0-joined cubic Bezier segments.
///
/// The parameter domain is `[0, segments.len()]`; the integer part of a
/// parameter addresses the segment and the fraction is the local parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CubicSegment>", into = "Vec<CubicSegment>")]
pub struct CurveSpec {
    segments: Vec<CubicSegment>,
}

impl TryFrom<Vec<CubicSegment>> for CurveSpec {
    type Error = GeometryError;

    fn try_from(segments: Vec<CubicSegment>) -> Result<Self, Self::Error> {
        Self::new(segments)
    }
}

impl From<CurveSpec> for Vec<CubicSegment> {
    fn from(spec: CurveSpec) -> Self {
        spec.segments
    }
}

impl CurveSpec {
    pub fn new(segments: Vec<CubicSegment>) -> Result<Self, GeometryError> {
        if segments.is_empty() {
            return Err(GeometryError::EmptyCurve);
        }
        for (i, seg) in segments.iter().enumerate() {
            if seg.control.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
                return Err(GeometryError::NonFinite("curve control point"));
            }
            if i > 0 {
                let prev = segments[i - 1].control[3];
                let scale = 1.0 + prev.coords.norm();
                if (seg.control[0] - prev).norm() > 1e-9 * scale {
                    return Err(GeometryError::Discontinuous { segment: i });
                }
            }
        }
        Ok(Self { segments })
    }

    pub fn line(a: Point3<f64>, b: Point3<f64>) -> Self {
        Self { segments: vec![CubicSegment::line(a, b)] }
    }

    /// Builds a curve from a flat control point list: 2 points (line),
    /// 3 points (quadratic) or `3k + 1` points (k joined cubics).
    pub fn from_control_points(points: &[Point3<f64>]) -> Result<Self, GeometryError> {
        match points.len() {
            0 | 1 => Err(GeometryError::EmptyCurve),
            2 => Self::new(vec![CubicSegment::line(points[0], points[1])]),
            3 => Self::new(vec![CubicSegment::quadratic(points[0], points[1], points[2])]),
            n if (n - 1) % 3 == 0 => Self::new(
                points
                    .windows(4)
                    .step_by(3)
                    .map(|w| CubicSegment::new([w[0], w[1], w[2], w[3]]))
                    .collect(),
            ),
            n => Err(GeometryError::ControlPointCount(n)),
        }
    }

    pub fn segments(&self) -> &[CubicSegment] {
        &self.segments
    }

    /// Flat control point list with shared endpoints listed once.
    pub fn control_points(&self) -> Vec<Point3<f64>> {
        let mut out = vec![self.segments[0].control[0]];
        for seg in &self.segments {
            out.extend_from_slice(&seg.control[1..]);
        }
        out
    }

    pub fn domain(&self) -> f64 {
        self.segments.len() as f64
    }

    fn locate(&self, u: f64) -> Result<(usize, f64), GeometryError> {
        let end = self.domain();
        if !(0.0..=end).contains(&u) {
            return Err(GeometryError::ParameterOutOfDomain { value: u, end });
        }
        let idx = (u.floor() as usize).min(self.segments.len() - 1);
        Ok((idx, u - idx as f64))
    }

    pub fn evaluate(&self, u: f64) -> Result<Point3<f64>, GeometryError> {
        let (idx, local) = self.locate(u)?;
        Ok(self.segments[idx].point(local))
    }

    pub fn derivative(&self, u: f64) -> Result<Vector3<f64>, GeometryError> {
        let (idx, local) = self.locate(u)?;
        Ok(self.segments[idx].derivative(local))
    }

    pub fn start(&self) -> Point3<f64> {
        self.segments[0].control[0]
    }

    pub fn end(&self) -> Point3<f64> {
        self.segments[self.segments.len() - 1].control[3]
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| CubicSegment::new(s.control.map(|p| iso * p)))
            .collect();
        Self { segments }
    }

    /// Samples `n + 1` points uniformly in the curve parameter and assigns
    /// each the fraction of path length travelled to reach it.
    pub fn discretize(&self, n: usize) -> Result<DiscretizedCurve, GeometryError> {
        if n < 2 {
            return Err(GeometryError::TooFewSegments(n));
        }
        let end = self.domain();
        let points: Vec<_> = (0..=n)
            .map(|i| {
                let u = end * i as f64 / n as f64;
                self.evaluate(u.min(end)).expect("sample within domain")
            })
            .collect();
        DiscretizedCurve::from_vertices(points)
    }
}

/// A piecewise-linear curve whose vertices carry monotone parameters in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedCurve {
    vertices: Vec<Point3<f64>>,
    params: Vec<f64>,
    total_length: f64,
}

impl DiscretizedCurve {
    /// Parameterizes a polyline by cumulative chord length. Zero-length
    /// chords are collapsed so the parameters are strictly increasing.
    pub fn from_vertices(points: Vec<Point3<f64>>) -> Result<Self, GeometryError> {
        let mut vertices: Vec<Point3<f64>> = Vec::with_capacity(points.len());
        let mut cumulative = Vec::with_capacity(points.len());
        let mut length = 0.0;
        for p in points {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(GeometryError::NonFinite("curve vertex"));
            }
            match vertices.last() {
                None => {
                    vertices.push(p);
                    cumulative.push(0.0);
                }
                Some(last) => {
                    let d = (p - last).norm();
                    if d > 1e-15 {
                        length += d;
                        vertices.push(p);
                        cumulative.push(length);
                    }
                }
            }
        }
        if length < 1e-12 || vertices.len() < 2 {
            return Err(GeometryError::DegenerateCurve(length));
        }
        let last = cumulative.len() - 1;
        let mut params: Vec<f64> = cumulative.iter().map(|c| c / length).collect();
        params[last] = 1.0;
        Ok(Self { vertices, params, total_length: length })
    }

    /// Same polyline with caller-supplied parameters (used by reparameterization).
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self, GeometryError> {
        if params.len() != self.vertices.len() {
            return Err(GeometryError::ParamCount {
                expected: self.vertices.len(),
                got: params.len(),
            });
        }
        validate_params(&params)?;
        Ok(Self { vertices: self.vertices.clone(), params, total_length: self.total_length })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Fraction of path length at every vertex (equals `params` unless the
    /// curve was reparameterized).
    pub fn arc_fractions(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.vertices.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.vertices.windows(2) {
            acc += (w[1] - w[0]).norm();
            out.push(acc / self.total_length);
        }
        let last = out.len() - 1;
        out[last] = 1.0;
        out
    }

    /// Index of the segment containing `t` (half-open, last segment closed).
    pub fn segment_at(&self, t: f64) -> usize {
        let n = self.segment_count();
        let idx = self.params.partition_point(|&p| p <= t);
        idx.saturating_sub(1).min(n - 1)
    }

    /// Point at parameter `t` on segment `seg`.
    pub fn point_on_segment(&self, seg: usize, t: f64) -> Point3<f64> {
        let (t0, t1) = (self.params[seg], self.params[seg + 1]);
        let s = (t - t0) / (t1 - t0);
        self.vertices[seg] + (self.vertices[seg + 1] - self.vertices[seg]) * s
    }

    pub fn point_at(&self, t: f64) -> Point3<f64> {
        let t = t.clamp(0.0, 1.0);
        self.point_on_segment(self.segment_at(t), t)
    }

    pub fn segment_direction(&self, seg: usize) -> Unit<Vector3<f64>> {
        Unit::new_normalize(self.vertices[seg + 1] - self.vertices[seg])
    }

    pub fn tangent_at(&self, t: f64) -> Unit<Vector3<f64>> {
        self.segment_direction(self.segment_at(t.clamp(0.0, 1.0)))
    }
}

pub(crate) fn validate_params(params: &[f64]) -> Result<(), GeometryError> {
    if params.len() < 2 || params[0] != 0.0 || params[params.len() - 1] != 1.0 {
        return Err(GeometryError::NonMonotoneParams);
    }
    if params.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GeometryError::NonMonotoneParams);
    }
    Ok(())
}
