use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3, Axis};

use crate::error::{shape_err, Result};
use crate::Scalar;

/// Output length of a valid cross-correlation, `None` if the kernel does not fit.
pub fn conv1d_output_len(n: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || n < kernel {
        None
    } else {
        Some((n - kernel) / stride + 1)
    }
}

/// Valid 1-D cross-correlation. `weight` is `out × kernel × in`.
pub fn conv1d_forward<T: Scalar>(
    input: ArrayView2<T>,
    weight: ArrayView3<T>,
    bias: ArrayView1<T>,
    stride: usize,
) -> Result<Array2<T>> {
    let (n, d_in) = input.dim();
    let (d_out, k, w_in) = weight.dim();
    if w_in != d_in || bias.len() != d_out {
        return shape_err(format!(
            "conv1d: input has {d_in} channels, weight {:?}, bias {}",
            weight.dim(),
            bias.len()
        ));
    }
    let Some(len) = conv1d_output_len(n, k, stride) else {
        return shape_err(format!("conv1d: kernel {k} / stride {stride} do not fit length {n}"));
    };
    let mut out = Array2::zeros((len, d_out));
    for i in 0..len {
        let window = input.slice(s![stride * i..stride * i + k, ..]);
        for j in 0..d_out {
            let mut acc = bias[j];
            for t in 0..k {
                for c in 0..d_in {
                    acc += weight[[j, t, c]] * window[[t, c]];
                }
            }
            out[[i, j]] = acc;
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub(crate) fn conv1d_backward<T: Scalar>(
    input: ArrayView2<T>,
    weight: ArrayView3<T>,
    stride: usize,
    grad_out: ArrayView2<T>,
) -> (Array2<T>, Array2<T>, Array1<T>) {
    let (d_out, k, d_in) = weight.dim();
    let mut gin = Array2::zeros(input.dim());
    let mut gw = Array2::zeros((d_out, k * d_in));
    let gb = grad_out.sum_axis(Axis(0));
    for (i, grow) in grad_out.axis_iter(Axis(0)).enumerate() {
        for j in 0..d_out {
            let g = grow[j];
            for t in 0..k {
                let r = stride * i + t;
                for c in 0..d_in {
                    gw[[j, t * d_in + c]] += g * input[[r, c]];
                    gin[[r, c]] += g * weight[[j, t, c]];
                }
            }
        }
    }
    (gin, gw, gb)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(scores: &Array2<T>) -> Array2<T> {
    let mut out = scores.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row.mapv_inplace(|x| x / sum);
    }
    out
}

pub(crate) struct AttentionCache<T> {
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    p: Array2<T>,
}

fn check_attention<T: Scalar>(
    x: &ArrayView2<T>,
    wq: &ArrayView2<T>,
    wk: &ArrayView2<T>,
    wv: &ArrayView2<T>,
) -> Result<()> {
    let d = x.ncols();
    if wq.dim() != wk.dim() || wq.dim() != wv.dim() || wq.nrows() != d || wq.ncols() == 0 {
        return shape_err(format!(
            "attention: input width {d}, projections {:?} {:?} {:?}",
            wq.dim(),
            wk.dim(),
            wv.dim()
        ));
    }
    Ok(())
}

pub(crate) fn attention_with_cache<T: Scalar>(
    x: ArrayView2<T>,
    wq: ArrayView2<T>,
    wk: ArrayView2<T>,
    wv: ArrayView2<T>,
) -> (Array2<T>, AttentionCache<T>) {
    let scale = T::one() / T::of_usize(wq.ncols()).sqrt();
    let q = x.dot(&wq);
    let k = x.dot(&wk);
    let v = x.dot(&wv);
    let scores = q.dot(&k.t()) * scale;
    let p = softmax_rows(&scores);
    let out = p.dot(&v);
    (out, AttentionCache { q, k, v, p })
}

/// Returns `(grad_x, grad_wq, grad_wk, grad_wv)`.
pub(crate) fn attention_backward<T: Scalar>(
    x: ArrayView2<T>,
    wq: ArrayView2<T>,
    wk: ArrayView2<T>,
    wv: ArrayView2<T>,
    cache: &AttentionCache<T>,
    grad_out: ArrayView2<T>,
) -> (Array2<T>, Array2<T>, Array2<T>, Array2<T>) {
    let scale = T::one() / T::of_usize(wq.ncols()).sqrt();
    let dp = grad_out.dot(&cache.v.t());
    let dv = cache.p.t().dot(&grad_out);
    let mut ds = dp;
    for (mut drow, prow) in ds.axis_iter_mut(Axis(0)).zip(cache.p.axis_iter(Axis(0))) {
        let dot: T = drow.iter().zip(prow.iter()).map(|(&a, &b)| a * b).sum();
        for (d, &p) in drow.iter_mut().zip(prow.iter()) {
            *d = p * (*d - dot) * scale;
        }
    }
    let dq = ds.dot(&cache.k);
    let dk = ds.t().dot(&cache.q);
    let gwq = x.t().dot(&dq);
    let gwk = x.t().dot(&dk);
    let gwv = x.t().dot(&dv);
    let gx = dq.dot(&wq.t()) + dk.dot(&wk.t()) + dv.dot(&wv.t());
    (gx, gwq, gwk, gwv)
}

/// Scaled dot-product self-attention `softmax(Q Kᵀ / √d_att) V`.
pub fn attention_forward<T: Scalar>(
    x: ArrayView2<T>,
    wq: ArrayView2<T>,
    wk: ArrayView2<T>,
    wv: ArrayView2<T>,
) -> Result<Array2<T>> {
    check_attention(&x, &wq, &wk, &wv)?;
    Ok(attention_with_cache(x, wq, wk, wv).0)
}

/// Concatenated per-head attention outputs projected by `wo` (plus an
/// optional bias row).
pub fn multihead_forward<T: Scalar>(
    blocks: &[ArrayView2<T>],
    heads: &[[ArrayView2<T>; 3]],
    wo: ArrayView2<T>,
    bias: Option<ArrayView1<T>>,
) -> Result<Array2<T>> {
    if blocks.len() != heads.len() || blocks.is_empty() {
        return shape_err("multihead: need one input block per head");
    }
    let n = blocks[0].nrows();
    let mut outs = Vec::with_capacity(heads.len());
    for (x, [wq, wk, wv]) in blocks.iter().zip(heads) {
        if x.nrows() != n {
            return shape_err("multihead: heads disagree on sequence length");
        }
        outs.push(attention_forward(x.view(), wq.view(), wk.view(), wv.view())?);
    }
    let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
    let concat = ndarray::concatenate(Axis(1), &views).expect("equal row counts");
    if concat.ncols() != wo.nrows() {
        return shape_err(format!(
            "multihead: concatenated width {} vs projection {:?}",
            concat.ncols(),
            wo.dim()
        ));
    }
    let mut y = concat.dot(&wo);
    if let Some(b) = bias {
        if b.len() != y.ncols() {
            return shape_err("multihead: bias width");
        }
        y += &b;
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Affine map `x W + b` followed by an activation; `weight` is `in × out`.
#[derive(Clone, Debug)]
pub struct DenseLayer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

pub fn mlp_forward<T: Scalar>(x: ArrayView1<T>, layers: &[DenseLayer<T>]) -> Result<Array1<T>> {
    let mut h = x.to_owned();
    for (i, layer) in layers.iter().enumerate() {
        if layer.weight.nrows() != h.len() || layer.weight.ncols() != layer.bias.len() {
            return shape_err(format!(
                "mlp layer {i}: input {} vs weight {:?}",
                h.len(),
                layer.weight.dim()
            ));
        }
        h = h.dot(&layer.weight) + &layer.bias;
        if layer.activation == Activation::Relu {
            h.mapv_inplace(|v| v.max(T::zero()));
        }
    }
    Ok(h)
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Elementwise logistic function.
pub fn sigmoid_head<T: Scalar>(x: ArrayView1<T>) -> Array1<T> {
    x.mapv(sigmoid)
}

/// `sqrt(mean((pred - target)²))` over every entry.
pub fn rmse_loss<T: Scalar>(pred: ArrayView2<T>, target: ArrayView2<T>) -> Result<T> {
    if pred.dim() != target.dim() || pred.is_empty() {
        return shape_err(format!(
            "rmse: prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        ));
    }
    let sse: T = pred
        .iter()
        .zip(target.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok((sse / T::of_usize(pred.len())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{standard_normal_matrix, Rng};
    use ndarray::{array, Array3};

    #[test]
    fn conv_length_arithmetic() {
        assert_eq!(conv1d_output_len(100, 3, 1), Some(98));
        assert_eq!(conv1d_output_len(100, 3, 2), Some(49));
        assert_eq!(conv1d_output_len(2, 3, 1), None);
    }

    #[test]
    fn averaging_kernel_keeps_constants() {
        let x = Array2::from_elem((10, 1), 2.5f64);
        let w = Array3::from_elem((1, 3, 1), 1.0 / 3.0);
        let y = conv1d_forward(x.view(), w.view(), Array1::zeros(1).view(), 1).unwrap();
        assert_eq!(y.dim(), (8, 1));
        assert!(y.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn single_tap_identity() {
        let mut rng = Rng::new(1);
        let x: Array2<f64> = standard_normal_matrix(&mut rng, 7, 3);
        let mut w = Array3::zeros((3, 1, 3));
        for c in 0..3 {
            w[[c, 0, c]] = 1.0;
        }
        let y = conv1d_forward(x.view(), w.view(), Array1::zeros(3).view(), 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = Array2::<f64>::zeros((5, 2));
        let w = Array3::<f64>::zeros((1, 3, 1));
        assert!(conv1d_forward(x.view(), w.view(), Array1::zeros(1).view(), 1).is_err());
    }

    #[test]
    fn attention_of_single_row_is_value_row() {
        let x = array![[0.3f64, -1.2]];
        let wq = array![[1.0, 2.0], [0.5, -1.0]];
        let wk = array![[0.1, 0.0], [2.0, 1.0]];
        let wv = array![[1.0, 0.0], [0.0, 1.0]];
        let y = attention_forward(x.view(), wq.view(), wk.view(), wv.view()).unwrap();
        assert_eq!(y, x.dot(&wv));
    }

    #[test]
    fn zero_queries_give_column_means() {
        let mut rng = Rng::new(4);
        let x: Array2<f64> = standard_normal_matrix(&mut rng, 5, 3);
        let wk: Array2<f64> = standard_normal_matrix(&mut rng, 3, 2);
        let wv: Array2<f64> = standard_normal_matrix(&mut rng, 3, 2);
        let wq = Array2::zeros((3, 2));
        let y = attention_forward(x.view(), wq.view(), wk.view(), wv.view()).unwrap();
        let means = x.dot(&wv).mean_axis(Axis(0)).unwrap();
        for row in y.rows() {
            for (a, b) in row.iter().zip(&means) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let x = Array2::from_shape_fn((4, 2), |(_, j)| j as f64 + 0.5);
        let mut rng = Rng::new(9);
        let w: Vec<Array2<f64>> = (0..3).map(|_| standard_normal_matrix(&mut rng, 2, 3)).collect();
        let y = attention_forward(x.view(), w[0].view(), w[1].view(), w[2].view()).unwrap();
        for r in 1..4 {
            assert_eq!(y.row(r), y.row(0));
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let s = array![[1000.0f64, 999.0, -5.0], [0.0, 0.0, 0.0]];
        let p = softmax_rows(&s);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn one_head_identity_projection() {
        let mut rng = Rng::new(10);
        let x: Array2<f64> = standard_normal_matrix(&mut rng, 4, 3);
        let w: Vec<Array2<f64>> = (0..3).map(|_| standard_normal_matrix(&mut rng, 3, 2)).collect();
        let single = attention_forward(x.view(), w[0].view(), w[1].view(), w[2].view()).unwrap();
        let eye = Array2::<f64>::eye(2);
        let multi = multihead_forward(
            &[x.view()],
            &[[w[0].view(), w[1].view(), w[2].view()]],
            eye.view(),
            None,
        )
        .unwrap();
        assert_eq!(single, multi);
    }

    #[test]
    fn masked_second_head() {
        let mut rng = Rng::new(12);
        let x: Array2<f64> = standard_normal_matrix(&mut rng, 3, 2);
        let zero = Array2::zeros((3, 2));
        let w: Vec<Array2<f64>> = (0..6).map(|_| standard_normal_matrix(&mut rng, 2, 2)).collect();
        let mut wo = Array2::zeros((4, 2));
        wo[[0, 0]] = 1.0;
        wo[[1, 1]] = 1.0;
        let y = multihead_forward(
            &[x.view(), zero.view()],
            &[[w[0].view(), w[1].view(), w[2].view()], [w[3].view(), w[4].view(), w[5].view()]],
            wo.view(),
            None,
        )
        .unwrap();
        let head1 = attention_forward(x.view(), w[0].view(), w[1].view(), w[2].view()).unwrap();
        assert_eq!(y, head1);
    }

    #[test]
    fn mlp_zero_and_identity() {
        let x = array![0.5f64, -2.0];
        let zero = DenseLayer {
            weight: Array2::zeros((2, 3)),
            bias: Array1::zeros(3),
            activation: Activation::Relu,
        };
        assert_eq!(mlp_forward(x.view(), &[zero]).unwrap(), Array1::<f64>::zeros(3));
        let eye = DenseLayer {
            weight: Array2::eye(2),
            bias: Array1::zeros(2),
            activation: Activation::Identity,
        };
        assert_eq!(mlp_forward(x.view(), &[eye]).unwrap(), x);
    }

    #[test]
    fn mlp_hand_instance() {
        let layers = [
            DenseLayer {
                weight: array![[1.0f64], [1.0]],
                bias: array![0.0],
                activation: Activation::Relu,
            },
            DenseLayer {
                weight: array![[-1.0]],
                bias: array![1.0],
                activation: Activation::Identity,
            },
        ];
        let y = mlp_forward(array![1.0, 2.0].view(), &layers).unwrap();
        assert_eq!(y, array![-2.0]);
    }

    #[test]
    fn sigmoid_properties() {
        assert_eq!(sigmoid_head(array![0.0f64].view())[0], 0.5);
        assert!((1.0 - sigmoid_head(array![50.0f64].view())[0]).abs() < 1e-15);
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let x = 10.0 * rng.normal();
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rmse_examples() {
        let t = array![[0.1f64, 0.2], [0.3, 0.4]];
        assert_eq!(rmse_loss(t.view(), t.view()).unwrap(), 0.0);
        let shifted = &t + 0.25;
        assert!((rmse_loss(shifted.view(), t.view()).unwrap() - 0.25).abs() < 1e-15);
        let l = rmse_loss(array![[0.0f64], [0.0]].view(), array![[3.0], [4.0]].view()).unwrap();
        assert!((l - (12.5f64).sqrt()).abs() < 1e-15);
        assert!(rmse_loss(t.view(), array![[1.0]].view()).is_err());
    }
}
