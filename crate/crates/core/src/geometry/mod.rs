//! Curves, frames and generalized cylinders.

mod curve;
mod cylinder;
mod frame;

pub use curve::{CubicSegment, CurveSpec, DiscretizedCurve, DEFAULT_CURVE_SEGMENTS};
pub use cylinder::{Candidate, GeneralizedCylinder, RelativeCoords, TIE_TOLERANCE};
pub(crate) use cylinder::piecewise_linear;
pub use frame::{check_rotation, orthonormalize, propagate_frames, slerp, KeyFrame, LocalFrame};

#[allow(unused_imports)]

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("curve has no segments")]
    EmptyCurve,
    #[error("unsupported control point count {0} (need 2, 3 or 3k+1)")]
    ControlPointCount(usize),
    #[error("segment {segment} does not start where the previous one ends")]
    Discontinuous { segment: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("parameter {value} outside [0, {end}]")]
    ParameterOutOfDomain { value: f64, end: f64 },
    #[error("discretization needs at least 2 segments, got {0}")]
    TooFewSegments(usize),
    #[error("curve is degenerate (length {0:e})")]
    DegenerateCurve(f64),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("parameters must increase strictly from 0 to 1")]
    NonMonotoneParams,
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("not a rotation (orthogonality error {orthogonality_error:e}, det {determinant})")]
    NotARotation { orthogonality_error: f64, determinant: f64 },
    #[error("need at least 2 key frames, got {0}")]
    TooFewKeyframes(usize),
    #[error("key frames must start at t=0 and end at t=1")]
    KeyframeCoverage,
    #[error("key frames must be strictly sorted by t")]
    UnsortedKeyframes,
    #[error("initial direction is parallel to the curve tangent")]
    ParallelInitialDirection,
    #[error("zero tangent at t={t}")]
    ZeroTangent { t: f64 },
    #[error("frame propagation collapsed at key frame {keyframe}")]
    FramePropagationFailed { keyframe: usize },
}
