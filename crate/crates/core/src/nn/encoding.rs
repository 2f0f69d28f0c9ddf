use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

use super::Scalar;

pub const DEFAULT_FREQUENCIES: usize = 6;

/// Encoded width for `l` frequencies: the raw vector plus a sine and a cosine
/// block per frequency.
pub fn encoded_dim(l: usize) -> usize {
    3 + 6 * l
}

/// `[v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(l-1) pi v), cos(2^(l-1) pi v)]`.
pub fn positional_encoding<S: Scalar>(v: &[S; 3], l: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(encoded_dim(l));
    out.extend_from_slice(v);
    for k in 0..l {
        let f = S::lit(PI * (1u64 << k) as f64);
        out.extend(v.iter().map(|&x| (f * x).sin()));
        out.extend(v.iter().map(|&x| (f * x).cos()));
    }
    out
}

/// Row-wise encoding of an `n x 3` matrix.
pub fn encode_batch<S: Scalar>(coords: ArrayView2<S>, l: usize) -> Array2<S> {
    assert_eq!(coords.ncols(), 3, "coordinates must have 3 columns");
    let mut out = Array2::zeros((coords.nrows(), encoded_dim(l)));
    for (row, mut dst) in coords.rows().into_iter().zip(out.rows_mut()) {
        let enc = positional_encoding(&[row[0], row[1], row[2]], l);
        dst.iter_mut().zip(enc).for_each(|(d, e)| *d = e);
    }
    out
}
