//! Mesh input, signed distance queries and training-sample generation.

mod mesh;
mod query;
mod sampling;

pub use mesh::{load_and_normalize, Normalization, TriMesh, NORMALIZED_HALF_EXTENT};
pub use query::{closest_on_triangle, ClosestPoint, Feature, MeshQuery};
pub use sampling::{
    estimate_gc_radii, sample_elimination, sample_training_set, Sample, SampleKind, SampleSet, SamplingConfig,
    SamplingReport,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("mesh has zero extent")]
    ZeroExtent,
    #[error("triangle index {index} out of range for {vertices} vertices")]
    IndexOutOfRange { index: u32, vertices: usize },
    #[error("non-finite vertex coordinate")]
    NonFinite,
    #[error("obj line {line}: {message}")]
    Obj { line: usize, message: String },
    #[error("radius scale must be at least 1, got {0}")]
    InvalidScale(f64),
    #[error("mesh normals are not consistently oriented")]
    NonOrientable,
    #[error("no cylinders given")]
    NoCylinders,
    #[error("cylinders do not cover the surface: {rejected} of {total} samples outside")]
    Coverage { rejected: usize, total: usize },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file is truncated")]
    Truncated,
    #[error("malformed sample record")]
    BadRecord,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
