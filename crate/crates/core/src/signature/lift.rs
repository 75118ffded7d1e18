use std::ops::Range;

use ndarray::{Array2, ArrayView2, Axis};

use super::tensor::{level_spans, mul_segment_backward, mul_segment_inplace, sig_dim};
use super::TruncatedSignature;
use crate::error::{shape_err, Error, Result};
use crate::Scalar;

/// Prepends the normalised time channel `t_i = i / (n - 1)`.
pub fn time_augment<T: Scalar>(values: ArrayView2<T>) -> Result<Array2<T>> {
    let (n, d) = values.dim();
    if n < 2 {
        return shape_err(format!("time augmentation needs at least 2 samples, got {n}"));
    }
    let denom = T::of_usize(n - 1);
    let mut out = Array2::zeros((n, d + 1));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row[0] = T::of_usize(i) / denom;
        for j in 0..d {
            row[j + 1] = values[[i, j]];
        }
    }
    Ok(out)
}

/// Signature of the piecewise-linear interpolation of the rows of `path`.
pub fn path_signature<T: Scalar>(path: ArrayView2<T>, depth: usize) -> Result<TruncatedSignature<T>> {
    let (n, d) = path.dim();
    if n < 2 || d == 0 || depth == 0 {
        return shape_err(format!(
            "path signature needs n >= 2, d >= 1, depth >= 1 (got {n}, {d}, {depth})"
        ));
    }
    let mut sig = vec![T::zero(); sig_dim(d, depth)];
    let mut scratch = vec![T::zero(); 2 * d.pow(depth as u32)];
    let mut delta = vec![T::zero(); d];
    for i in 1..n {
        for c in 0..d {
            delta[c] = path[[i, c]] - path[[i - 1, c]];
        }
        mul_segment_inplace(&mut sig, &delta, depth, &mut scratch);
    }
    TruncatedSignature::from_flat(d, depth, sig)
}

/// Prefix lengths `stride, 2·stride, ..., len` used by the lifting.
pub fn prefix_ends(len: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 || 2 * stride > len {
        return Err(Error::Stride(format!(
            "stride must lie in 1..={} for a length-{len} stream, got {stride}",
            len / 2
        )));
    }
    if !len.is_multiple_of(stride) {
        return Err(Error::Stride(format!(
            "stream length {len} is not divisible by stride {stride}"
        )));
    }
    Ok((1..=len / stride).map(|r| r * stride).collect())
}

/// The lifted family of prefixes `Y[0..stride], Y[0..2·stride], ..., Y`.
pub fn lift<T: Scalar>(path: ArrayView2<'_, T>, stride: usize) -> Result<Vec<ArrayView2<'_, T>>> {
    let ends = prefix_ends(path.nrows(), stride)?;
    Ok(ends
        .into_iter()
        .map(|e| path.slice_move(ndarray::s![..e, ..]))
        .collect())
}

/// Stacked prefix signatures, one row per prefix (longest last).
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedSignatureMatrix<T> {
    pub matrix: Array2<T>,
    /// Column span of each signature level, level 1 first.
    pub level_spans: Vec<Range<usize>>,
    pub channels: usize,
    pub depth: usize,
}

impl<T> LiftedSignatureMatrix<T> {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Intermediate signatures of every prefix, kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct SignatureTrace<T> {
    /// Row `i` is the signature of the first `i + 1` points.
    states: Array2<T>,
    ends: Vec<usize>,
    depth: usize,
}

/// Signatures of the prefixes ending at `ends` (prefix lengths, strictly
/// increasing, each in `1..=n`) together with the trace needed to
/// differentiate them.
pub fn lifted_signature_forward<T: Scalar>(
    path: ArrayView2<T>,
    depth: usize,
    ends: &[usize],
) -> Result<(LiftedSignatureMatrix<T>, SignatureTrace<T>)> {
    let (n, d) = path.dim();
    if d == 0 || depth == 0 || ends.is_empty() {
        return shape_err("signature rows need channels, depth and at least one prefix");
    }
    if ends.windows(2).any(|w| w[0] >= w[1]) || ends[0] == 0 || *ends.last().unwrap() > n {
        return shape_err(format!("invalid prefix ends {ends:?} for a length-{n} path"));
    }
    let width = sig_dim(d, depth);
    let last = *ends.last().unwrap();
    let mut states = Array2::<T>::zeros((last, width));
    let mut scratch = vec![T::zero(); 2 * d.pow(depth as u32)];
    let mut delta = vec![T::zero(); d];
    let mut cur = vec![T::zero(); width];
    for i in 1..last {
        for c in 0..d {
            delta[c] = path[[i, c]] - path[[i - 1, c]];
        }
        mul_segment_inplace(&mut cur, &delta, depth, &mut scratch);
        states
            .row_mut(i)
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(&cur);
    }
    let mut matrix = Array2::<T>::zeros((ends.len(), width));
    for (r, &e) in ends.iter().enumerate() {
        matrix.row_mut(r).assign(&states.row(e - 1));
    }
    let lifted = LiftedSignatureMatrix {
        matrix,
        level_spans: level_spans(d, depth),
        channels: d,
        depth,
    };
    let trace = SignatureTrace {
        states,
        ends: ends.to_vec(),
        depth,
    };
    Ok((lifted, trace))
}

/// Gradient of `Σ grad_rows ⊙ rows` with respect to the path samples.
pub fn lifted_signature_backward<T: Scalar>(
    path: ArrayView2<T>,
    trace: &SignatureTrace<T>,
    grad_rows: ArrayView2<T>,
) -> Result<Array2<T>> {
    let (n, d) = path.dim();
    let depth = trace.depth;
    let width = sig_dim(d, depth);
    if grad_rows.dim() != (trace.ends.len(), width) {
        return shape_err(format!(
            "signature gradient has shape {:?}, expected ({}, {width})",
            grad_rows.dim(),
            trace.ends.len()
        ));
    }
    let mut grad_path = Array2::<T>::zeros((n, d));
    let last = trace.states.nrows();
    let mut g = vec![T::zero(); width];
    let mut g_prev = vec![T::zero(); width];
    let mut g_delta = vec![T::zero(); d];
    let mut delta = vec![T::zero(); d];
    let (mut exp_buf, mut grad_exp_buf) = (Vec::new(), Vec::new());
    let mut next_row = trace.ends.len();
    for i in (1..last).rev() {
        // gradient flowing into the state after step i
        while next_row > 0 && trace.ends[next_row - 1] - 1 == i {
            next_row -= 1;
            for (a, &b) in g.iter_mut().zip(grad_rows.row(next_row)) {
                *a += b;
            }
        }
        for c in 0..d {
            delta[c] = path[[i, c]] - path[[i - 1, c]];
        }
        g_prev.iter_mut().for_each(|x| *x = T::zero());
        g_delta.iter_mut().for_each(|x| *x = T::zero());
        let before = trace.states.row(i - 1);
        mul_segment_backward(
            before.as_slice().expect("standard layout"),
            &delta,
            depth,
            &g,
            &mut g_prev,
            &mut g_delta,
            &mut exp_buf,
            &mut grad_exp_buf,
        );
        for c in 0..d {
            grad_path[[i, c]] += g_delta[c];
            grad_path[[i - 1, c]] -= g_delta[c];
        }
        std::mem::swap(&mut g, &mut g_prev);
    }
    Ok(grad_path)
}

/// Signatures of the stride-lifted prefixes stacked into a matrix.
pub fn lifted_signature_matrix<T: Scalar>(
    path: ArrayView2<T>,
    depth: usize,
    stride: usize,
) -> Result<LiftedSignatureMatrix<T>> {
    let ends = prefix_ends(path.nrows(), stride)?;
    Ok(lifted_signature_forward(path, depth, &ends)?.0)
}
