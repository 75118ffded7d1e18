use std::ops::Range;

use crate::error::{shape_err, Result};
use crate::Scalar;

/// Number of stored components for `channels` channels truncated at `depth`.
pub fn sig_dim(channels: usize, depth: usize) -> usize {
    if channels == 1 {
        return depth;
    }
    (1..=depth).map(|i| channels.pow(i as u32)).sum()
}

/// Column span of every level, level 1 first.
pub fn level_spans(channels: usize, depth: usize) -> Vec<Range<usize>> {
    let mut spans = Vec::with_capacity(depth);
    let mut start = 0;
    let mut width = 1;
    for _ in 0..depth {
        width *= channels;
        spans.push(start..start + width);
        start += width;
    }
    spans
}

/// Levels `1..=depth` of a signature over `channels` channels.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSignature<T> {
    channels: usize,
    depth: usize,
    data: Vec<T>,
}

impl<T: Scalar> TruncatedSignature<T> {
    /// The signature of a constant path: every stored level is zero.
    pub fn identity(channels: usize, depth: usize) -> Self {
        assert!(channels >= 1 && depth >= 1);
        Self {
            channels,
            depth,
            data: vec![T::zero(); sig_dim(channels, depth)],
        }
    }

    pub fn from_flat(channels: usize, depth: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != sig_dim(channels, depth) {
            return shape_err(format!(
                "flat signature has {} entries, expected {}",
                data.len(),
                sig_dim(channels, depth)
            ));
        }
        Ok(Self { channels, depth, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Level `i` (1-based).
    pub fn level(&self, i: usize) -> &[T] {
        &self.data[level_range(self.channels, i)]
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<T> {
        self.data
    }
}

pub(crate) fn level_range(channels: usize, level: usize) -> Range<usize> {
    assert!(level >= 1);
    let start = sig_dim(channels, level - 1);
    start..start + channels.pow(level as u32)
}

/// Signature of the single linear segment with increment `delta`:
/// level `i` is `delta^{⊗i} / i!`.
pub fn segment_signature<T: Scalar>(delta: &[T], depth: usize) -> TruncatedSignature<T> {
    let d = delta.len();
    let mut sig = TruncatedSignature::identity(d, depth);
    sig.data[..d].copy_from_slice(delta);
    for k in 2..=depth {
        let prev = level_range(d, k - 1);
        let cur = level_range(d, k);
        let inv_k = T::one() / T::of_usize(k);
        let (lo, hi) = sig.data.split_at_mut(cur.start);
        let prev = &lo[prev];
        let out = &mut hi[..cur.len()];
        for (a, &pa) in prev.iter().enumerate() {
            let s = pa * inv_k;
            for (b, &db) in delta.iter().enumerate() {
                out[a * d + b] = s * db;
            }
        }
    }
    sig
}

/// Truncated tensor product of two signatures (Chen's identity).
pub fn chen_product<T: Scalar>(
    a: &TruncatedSignature<T>,
    b: &TruncatedSignature<T>,
) -> Result<TruncatedSignature<T>> {
    if a.channels != b.channels || a.depth != b.depth {
        return shape_err(format!(
            "chen product of ({}, {}) and ({}, {}) signatures",
            a.channels, a.depth, b.channels, b.depth
        ));
    }
    let d = a.channels;
    let mut out = TruncatedSignature::identity(d, a.depth);
    for k in 1..=a.depth {
        let r = level_range(d, k);
        let dst = &mut out.data[r.clone()];
        for ((o, &x), &y) in dst.iter_mut().zip(&a.data[r.clone()]).zip(&b.data[r]) {
            *o = x + y;
        }
        for i in 1..k {
            outer_acc(dst, a.level(i), b.level(k - i), T::one());
        }
    }
    Ok(out)
}

/// `out[α·|b| + β] += scale · a[α] · b[β]`
#[inline]
pub(crate) fn outer_acc<T: Scalar>(out: &mut [T], a: &[T], b: &[T], scale: T) {
    let lb = b.len();
    debug_assert_eq!(out.len(), a.len() * lb);
    for (row, &x) in out.chunks_exact_mut(lb).zip(a) {
        let s = scale * x;
        for (o, &y) in row.iter_mut().zip(b) {
            *o += s * y;
        }
    }
}

/// `out[α] += Σ_β g[α·|b| + β] · b[β]`
#[inline]
pub(crate) fn contract_trailing<T: Scalar>(out: &mut [T], g: &[T], b: &[T]) {
    let lb = b.len();
    for (o, row) in out.iter_mut().zip(g.chunks_exact(lb)) {
        let mut s = T::zero();
        for (&x, &y) in row.iter().zip(b) {
            s += x * y;
        }
        *o += s;
    }
}

/// `out[β] += Σ_α a[α] · g[α·|out| + β]`
#[inline]
pub(crate) fn contract_leading<T: Scalar>(out: &mut [T], a: &[T], g: &[T]) {
    let lb = out.len();
    for (&x, row) in a.iter().zip(g.chunks_exact(lb)) {
        for (o, &y) in out.iter_mut().zip(row) {
            *o += x * y;
        }
    }
}

/// In place `sig ← sig ⊗ exp(delta)`, truncated, by Horner's scheme.
/// `scratch` must hold at least `2·d^depth` entries.
pub(crate) fn mul_segment_inplace<T: Scalar>(
    sig: &mut [T],
    delta: &[T],
    depth: usize,
    scratch: &mut [T],
) {
    let d = delta.len();
    let top = d.pow(depth as u32);
    let (buf_a, rest) = scratch.split_at_mut(top);
    let buf_b = &mut rest[..top];
    for k in (1..=depth).rev() {
        // tmp holds a level-i tensor; grows one level per pass
        let inv_k = T::one() / T::of_usize(k);
        let mut cur: &mut [T] = buf_a;
        let mut nxt: &mut [T] = buf_b;
        for (c, &x) in cur[..d].iter_mut().zip(delta) {
            *c = x * inv_k;
        }
        let mut len = d;
        for i in 1..k {
            let lvl = level_range(d, i);
            for (c, &s) in cur[..len].iter_mut().zip(&sig[lvl]) {
                *c += s;
            }
            let scale = T::one() / T::of_usize(k - i);
            let new_len = len * d;
            for (row, &x) in nxt[..new_len].chunks_exact_mut(d).zip(&cur[..len]) {
                let s = x * scale;
                for (o, &y) in row.iter_mut().zip(delta) {
                    *o = s * y;
                }
            }
            len = new_len;
            std::mem::swap(&mut cur, &mut nxt);
        }
        let lvl = level_range(d, k);
        for (o, &c) in sig[lvl].iter_mut().zip(&cur[..len]) {
            *o += c;
        }
    }
}

/// Reverse of [`mul_segment_inplace`]: given the signature `before` the
/// step, the increment and the upstream gradient `grad_after`, accumulates
/// the gradient w.r.t. `before` into `grad_before` and w.r.t. the increment
/// into `grad_delta`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mul_segment_backward<T: Scalar>(
    before: &[T],
    delta: &[T],
    depth: usize,
    grad_after: &[T],
    grad_before: &mut [T],
    grad_delta: &mut [T],
    exp_buf: &mut Vec<T>,
    grad_exp_buf: &mut Vec<T>,
) {
    let d = delta.len();
    let total = sig_dim(d, depth);
    exp_buf.clear();
    exp_buf.resize(total, T::zero());
    grad_exp_buf.clear();
    grad_exp_buf.resize(total, T::zero());
    // exp_buf ← levels of exp(delta)
    exp_buf[..d].copy_from_slice(delta);
    for j in 2..=depth {
        let prev = level_range(d, j - 1);
        let cur = level_range(d, j);
        let (lo, hi) = exp_buf.split_at_mut(cur.start);
        let inv = T::one() / T::of_usize(j);
        let out = &mut hi[..cur.len()];
        for (row, &x) in out.chunks_exact_mut(d).zip(&lo[prev]) {
            for (o, &y) in row.iter_mut().zip(delta) {
                *o = x * y * inv;
            }
        }
    }
    // after_k = Σ_{i+j=k} before_i ⊗ exp_j
    for k in 1..=depth {
        let gk = &grad_after[level_range(d, k)];
        // i = k, j = 0
        for (gb, &g) in grad_before[level_range(d, k)].iter_mut().zip(gk) {
            *gb += g;
        }
        // i = 0, j = k
        for (ge, &g) in grad_exp_buf[level_range(d, k)].iter_mut().zip(gk) {
            *ge += g;
        }
        for i in 1..k {
            let j = k - i;
            let ei = level_range(d, j);
            contract_trailing(&mut grad_before[level_range(d, i)], gk, &exp_buf[ei.clone()]);
            contract_leading(&mut grad_exp_buf[ei], &before[level_range(d, i)], gk);
        }
    }
    // exp_j = exp_{j-1} ⊗ delta / j
    for j in (2..=depth).rev() {
        let inv = T::one() / T::of_usize(j);
        let prev = level_range(d, j - 1);
        let cur = level_range(d, j);
        let (lo, hi) = grad_exp_buf.split_at_mut(cur.start);
        let gcur = &hi[..cur.len()];
        let eprev = &exp_buf[prev.clone()];
        let gprev = &mut lo[prev];
        for ((row, gp), &ep) in gcur.chunks_exact(d).zip(gprev.iter_mut()).zip(eprev) {
            let mut s = T::zero();
            for ((&g, &y), gd) in row.iter().zip(delta).zip(grad_delta.iter_mut()) {
                s += g * y;
                *gd += g * ep * inv;
            }
            *gp += s * inv;
        }
    }
    for (gd, &g) in grad_delta.iter_mut().zip(&grad_exp_buf[..d]) {
        *gd += g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_formula() {
        assert_eq!(sig_dim(5, 3), 155);
        assert_eq!(sig_dim(1, 4), 4);
        assert_eq!(sig_dim(2, 3), 14);
        for d in 2..7usize {
            for n in 1..5usize {
                assert_eq!(sig_dim(d, n), (d.pow(n as u32 + 1) - d) / (d - 1));
            }
        }
    }

    #[test]
    fn spans_tile_the_flat_vector() {
        let spans = level_spans(3, 4);
        assert_eq!(spans[0], 0..3);
        assert_eq!(spans[1], 3..12);
        assert_eq!(spans[3].end, sig_dim(3, 4));
    }

    #[test]
    fn scalar_segment_closed_form() {
        let s = segment_signature(&[2.0f64], 3);
        assert_eq!(s.as_flat(), &[2.0, 2.0, 8.0 / 6.0]);
    }

    #[test]
    fn two_channel_segment_level_two() {
        let s = segment_signature(&[1.0f64, 2.0], 2);
        assert_eq!(s.level(2), &[0.5, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_segment_is_identity() {
        let s = segment_signature(&[0.0f64; 3], 3);
        assert!(s.as_flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_is_neutral() {
        let a = segment_signature(&[0.3f64, -1.1, 0.7], 3);
        let e = TruncatedSignature::identity(3, 3);
        assert_eq!(chen_product(&a, &e).unwrap(), a);
        assert_eq!(chen_product(&e, &a).unwrap(), a);
    }

    #[test]
    fn reversal_cancels() {
        let a = segment_signature(&[0.3f64, -1.1, 0.7], 4);
        let b = segment_signature(&[-0.3f64, 1.1, -0.7], 4);
        let c = chen_product(&a, &b).unwrap();
        assert!(c.as_flat().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let a = TruncatedSignature::<f64>::identity(2, 3);
        let b = TruncatedSignature::<f64>::identity(3, 3);
        assert!(chen_product(&a, &b).is_err());
        let c = TruncatedSignature::<f64>::identity(2, 2);
        assert!(chen_product(&a, &c).is_err());
    }

    #[test]
    fn horner_step_matches_chen_product() {
        let a = chen_product(
            &segment_signature(&[0.4f64, -0.2, 1.3], 4),
            &segment_signature(&[-0.9f64, 0.5, 0.1], 4),
        )
        .unwrap();
        let delta = [0.25f64, 0.75, -0.6];
        let expected = chen_product(&a, &segment_signature(&delta, 4)).unwrap();
        let mut got = a.clone().into_flat();
        let mut scratch = vec![0.0; 2 * 81];
        mul_segment_inplace(&mut got, &delta, 4, &mut scratch);
        for (x, y) in got.iter().zip(expected.as_flat()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn segment_backward_matches_central_differences() {
        let d = 3;
        let depth = 3;
        let before = chen_product(
            &segment_signature(&[0.4f64, -0.2, 1.3], depth),
            &segment_signature(&[-0.9f64, 0.5, 0.1], depth),
        )
        .unwrap()
        .into_flat();
        let delta = vec![0.25f64, 0.75, -0.6];
        let total = sig_dim(d, depth);
        let weights: Vec<f64> = (0..total).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let objective = |b: &[f64], dl: &[f64]| {
            let mut s = b.to_vec();
            let mut scratch = vec![0.0; 2 * 27];
            mul_segment_inplace(&mut s, dl, depth, &mut scratch);
            s.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>()
        };
        let mut gb = vec![0.0; total];
        let mut gd = vec![0.0; d];
        mul_segment_backward(
            &before,
            &delta,
            depth,
            &weights,
            &mut gb,
            &mut gd,
            &mut Vec::new(),
            &mut Vec::new(),
        );
        let h = 1e-6;
        for i in 0..total {
            let mut p = before.clone();
            let mut m = before.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (objective(&p, &delta) - objective(&m, &delta)) / (2.0 * h);
            assert!((fd - gb[i]).abs() < 1e-8, "before[{i}]: {fd} vs {}", gb[i]);
        }
        for c in 0..d {
            let mut p = delta.clone();
            let mut m = delta.clone();
            p[c] += h;
            m[c] -= h;
            let fd = (objective(&before, &p) - objective(&before, &m)) / (2.0 * h);
            assert!((fd - gd[c]).abs() < 1e-8, "delta[{c}]: {fd} vs {}", gd[c]);
        }
    }
}
