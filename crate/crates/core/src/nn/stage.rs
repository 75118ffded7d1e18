use std::ops::Range;

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use super::ops::{attention_backward, attention_with_cache, conv1d_backward, conv1d_forward, sigmoid, AttentionCache};
use super::params::ParamStore;
use crate::error::{shape_err, Result};
use crate::signature::{lifted_signature_backward, lifted_signature_forward, prefix_ends, SignatureTrace};
use crate::Scalar;

/// Which prefixes of the stream are signed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftRule {
    /// Two prefixes: the first `len / 2` rows and the whole stream.
    Half,
    /// Prefixes of length `stride, 2·stride, ..., n`.
    Stride(usize),
    /// The whole stream only (no lifting).
    Whole,
}

impl LiftRule {
    pub fn prefix_ends(self, len: usize) -> Result<Vec<usize>> {
        match self {
            LiftRule::Half => {
                if len < 4 {
                    return shape_err(format!("cannot halve a stream of length {len}"));
                }
                Ok(vec![len / 2, len])
            }
            LiftRule::Stride(s) => prefix_ends(len, s),
            LiftRule::Whole => {
                if len < 2 {
                    return shape_err(format!("cannot sign a stream of length {len}"));
                }
                Ok(vec![len])
            }
        }
    }
}

impl std::str::FromStr for LiftRule {
    type Err = crate::Error;

    /// `half`, `whole` or `stride:S`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(LiftRule::Half),
            "whole" => Ok(LiftRule::Whole),
            _ => s
                .strip_prefix("stride:")
                .and_then(|v| v.parse().ok())
                .map(LiftRule::Stride)
                .ok_or_else(|| crate::Error::Config(format!("bad lift rule '{s}' (half, whole or stride:S)"))),
        }
    }
}

/// One attention head reading a column span of its input.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadSpec {
    pub columns: Range<usize>,
    pub width: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    /// Valid cross-correlation; weight `out × kernel × in`, bias `out`.
    Conv1d {
        weight: usize,
        bias: usize,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    /// Appends the normalised time (first column) and the original samples
    /// aligned with the centre of each convolution window (last columns).
    Augment {
        time: bool,
        original: bool,
        kernel: usize,
        stride: usize,
    },
    /// Rows are signatures of the lifted prefixes.
    Signature { depth: usize, lift: LiftRule },
    /// Heads read disjoint or shared column spans; outputs are concatenated
    /// and, if present, projected by `(weight, bias)`.
    MultiHead {
        heads: Vec<HeadSpec>,
        projection: Option<(usize, usize)>,
    },
    MeanPool,
    /// All rows joined into a single row, row by row.
    Flatten,
    /// Row-wise `x W + b`; weight `inputs × outputs`.
    Dense {
        weight: usize,
        bias: usize,
        inputs: usize,
        outputs: usize,
    },
    Relu,
    Sigmoid,
}

pub(crate) enum Cache<T> {
    Input(Array2<T>),
    Output(Array2<T>),
    Shape(usize, usize),
    Signature {
        path: Array2<T>,
        trace: SignatureTrace<T>,
    },
    MultiHead {
        input: Array2<T>,
        heads: Vec<AttentionCache<T>>,
        concat: Array2<T>,
    },
}

fn mat<T: Scalar>(p: &ParamStore<T>, id: usize) -> ArrayView2<'_, T> {
    let shape = &p.info(id).shape;
    ArrayView2::from_shape((shape[0], shape[1]), p.get(id)).expect("registered 2-d shape")
}

fn vector<T: Scalar>(p: &ParamStore<T>, id: usize) -> ArrayView1<'_, T> {
    ArrayView1::from(p.get(id))
}

fn add_grad<T: Scalar>(grads: &mut [T], p: &ParamStore<T>, id: usize, g: impl IntoIterator<Item = T>) {
    let info = p.info(id);
    for (dst, v) in grads[info.offset..info.offset + info.len].iter_mut().zip(g) {
        *dst += v;
    }
}

impl Stage {
    pub fn kind(&self) -> &'static str {
        match self {
            Stage::Conv1d { .. } => "conv1d",
            Stage::Augment { .. } => "augment",
            Stage::Signature { .. } => "signature",
            Stage::MultiHead { .. } => "multihead",
            Stage::MeanPool => "meanpool",
            Stage::Flatten => "flatten",
            Stage::Dense { .. } => "dense",
            Stage::Relu => "relu",
            Stage::Sigmoid => "sigmoid",
        }
    }

    pub(crate) fn forward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        x: Array2<T>,
        raw: ArrayView2<T>,
    ) -> Result<(Array2<T>, Cache<T>)> {
        match self {
            Stage::Conv1d {
                weight,
                bias,
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let w = ArrayView3::from_shape((*out_channels, *kernel, *in_channels), params.get(*weight))
                    .expect("conv weight shape");
                let y = conv1d_forward(x.view(), w, vector(params, *bias), *stride)?;
                Ok((y, Cache::Input(x)))
            }
            Stage::Augment {
                time,
                original,
                kernel,
                stride,
            } => {
                let (n, c) = x.dim();
                let d = raw.ncols();
                let offset = kernel.div_ceil(2) - 1;
                if *original && (n - 1) * stride + offset >= raw.nrows() {
                    return shape_err("augment: stream longer than the raw input");
                }
                let width = usize::from(*time) + c + if *original { d } else { 0 };
                let mut y = Array2::zeros((n, width));
                let denom = T::of_usize(n.max(2) - 1);
                for i in 0..n {
                    let mut col = 0;
                    if *time {
                        y[[i, 0]] = T::of_usize(i) / denom;
                        col = 1;
                    }
                    for j in 0..c {
                        y[[i, col + j]] = x[[i, j]];
                    }
                    if *original {
                        let src = stride * i + offset;
                        for j in 0..d {
                            y[[i, col + c + j]] = raw[[src, j]];
                        }
                    }
                }
                Ok((y, Cache::Shape(n, c)))
            }
            Stage::Signature { depth, lift } => {
                let ends = lift.prefix_ends(x.nrows())?;
                let (m, trace) = lifted_signature_forward(x.view(), *depth, &ends)?;
                Ok((m.matrix, Cache::Signature { path: x, trace }))
            }
            Stage::MultiHead { heads, projection } => {
                let mut outs = Vec::with_capacity(heads.len());
                let mut caches = Vec::with_capacity(heads.len());
                for h in heads {
                    if h.columns.end > x.ncols() {
                        return shape_err(format!(
                            "multihead: head reads columns {:?} of a width-{} input",
                            h.columns,
                            x.ncols()
                        ));
                    }
                    let block = x.slice(s![.., h.columns.clone()]);
                    let (o, c) = attention_with_cache(
                        block,
                        mat(params, h.wq),
                        mat(params, h.wk),
                        mat(params, h.wv),
                    );
                    outs.push(o);
                    caches.push(c);
                }
                let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
                let concat = ndarray::concatenate(Axis(1), &views).expect("equal row counts");
                let y = match projection {
                    Some((w, b)) => concat.dot(&mat(params, *w)) + vector(params, *b),
                    None => concat.clone(),
                };
                Ok((
                    y,
                    Cache::MultiHead {
                        input: x,
                        heads: caches,
                        concat,
                    },
                ))
            }
            Stage::MeanPool => {
                let (n, c) = x.dim();
                let y = x.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
                Ok((y, Cache::Shape(n, c)))
            }
            Stage::Flatten => {
                let (n, c) = x.dim();
                let flat = x.as_standard_layout().to_owned().into_shape_with_order((1, n * c)).expect("contiguous");
                Ok((flat, Cache::Shape(n, c)))
            }
            Stage::Dense {
                weight,
                bias,
                inputs,
                ..
            } => {
                if x.ncols() != *inputs {
                    return shape_err(format!("dense: expected {inputs} inputs, got {}", x.ncols()));
                }
                let y = x.dot(&mat(params, *weight)) + vector(params, *bias);
                Ok((y, Cache::Input(x)))
            }
            Stage::Relu => {
                let y = x.mapv(|v| v.max(T::zero()));
                Ok((y, Cache::Input(x)))
            }
            Stage::Sigmoid => {
                let y = x.mapv(sigmoid);
                Ok((y.clone(), Cache::Output(y)))
            }
        }
    }

    pub(crate) fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        cache: &Cache<T>,
        g: Array2<T>,
        grads: &mut [T],
    ) -> Result<Array2<T>> {
        match (self, cache) {
            (
                Stage::Conv1d {
                    weight,
                    bias,
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                },
                Cache::Input(x),
            ) => {
                let w = ArrayView3::from_shape((*out_channels, *kernel, *in_channels), params.get(*weight))
                    .expect("conv weight shape");
                let (gx, gw, gb) = conv1d_backward(x.view(), w, *stride, g.view());
                add_grad(grads, params, *weight, gw.iter().cloned());
                add_grad(grads, params, *bias, gb.iter().cloned());
                Ok(gx)
            }
            (Stage::Augment { time, .. }, Cache::Shape(_, c)) => {
                let start = usize::from(*time);
                Ok(g.slice(s![.., start..start + c]).to_owned())
            }
            (Stage::Signature { .. }, Cache::Signature { path, trace }) => {
                lifted_signature_backward(path.view(), trace, g.view())
            }
            (
                Stage::MultiHead { heads, projection },
                Cache::MultiHead {
                    input,
                    heads: caches,
                    concat,
                },
            ) => {
                let gc = match projection {
                    Some((w, b)) => {
                        add_grad(grads, params, *w, concat.t().dot(&g).iter().cloned());
                        add_grad(grads, params, *b, g.sum_axis(Axis(0)).iter().cloned());
                        g.dot(&mat(params, *w).t())
                    }
                    None => g,
                };
                let mut gx = Array2::zeros(input.dim());
                let mut col = 0;
                for (h, c) in heads.iter().zip(caches) {
                    let go = gc.slice(s![.., col..col + h.width]);
                    col += h.width;
                    let block = input.slice(s![.., h.columns.clone()]);
                    let (gb, gq, gk, gv) = attention_backward(
                        block,
                        mat(params, h.wq),
                        mat(params, h.wk),
                        mat(params, h.wv),
                        c,
                        go,
                    );
                    add_grad(grads, params, h.wq, gq.iter().cloned());
                    add_grad(grads, params, h.wk, gk.iter().cloned());
                    add_grad(grads, params, h.wv, gv.iter().cloned());
                    let mut dst = gx.slice_mut(s![.., h.columns.clone()]);
                    dst += &gb;
                }
                Ok(gx)
            }
            (Stage::MeanPool, Cache::Shape(n, c)) => {
                let scale = T::one() / T::of_usize(*n);
                Ok(Array2::from_shape_fn((*n, *c), |(_, j)| g[[0, j]] * scale))
            }
            (Stage::Flatten, Cache::Shape(n, c)) => Ok(g
                .as_standard_layout()
                .to_owned()
                .into_shape_with_order((*n, *c))
                .expect("contiguous")),
            (Stage::Dense { weight, bias, .. }, Cache::Input(x)) => {
                add_grad(grads, params, *weight, x.t().dot(&g).iter().cloned());
                add_grad(grads, params, *bias, g.sum_axis(Axis(0)).iter().cloned());
                Ok(g.dot(&mat(params, *weight).t()))
            }
            (Stage::Relu, Cache::Input(x)) => {
                let mut g = g;
                g.zip_mut_with(x, |gi, &xi| {
                    if xi <= T::zero() {
                        *gi = T::zero();
                    }
                });
                Ok(g)
            }
            (Stage::Sigmoid, Cache::Output(y)) => {
                let mut g = g;
                g.zip_mut_with(y, |gi, &yi| *gi = *gi * yi * (T::one() - yi));
                Ok(g)
            }
            (stage, _) => Err(crate::Error::Graph(format!(
                "cache does not belong to a {} stage",
                stage.kind()
            ))),
        }
    }
}
