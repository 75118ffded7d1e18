use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::config::{ArchitectureConfig, Variant};
use crate::error::{shape_err, Error, Result};
use crate::nn::{HeadSpec, LiftRule, Network, ParamStore, Stage};
use crate::numerics::Rng;
use crate::signature::{level_spans, sig_dim};
use crate::Scalar;

/// Provenance of a trained model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub train_size: usize,
    pub final_train_rmse: f64,
    pub final_val_rmse: Option<f64>,
}

/// A network together with the configuration it was built from.
pub struct Model<T> {
    pub(crate) arch: ArchitectureConfig,
    pub(crate) n: usize,
    pub(crate) d: usize,
    pub(crate) label_names: Vec<String>,
    pub(crate) network: Network<T>,
    pub(crate) metadata: Option<TrainingMetadata>,
}

struct Builder<'r, T> {
    params: ParamStore<T>,
    stages: Vec<Stage>,
    rng: &'r mut Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn weight(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<usize> {
        let id = self.params.add(name, shape)?;
        self.params.init_uniform(id, 1.0 / (fan_in as f64).sqrt(), self.rng);
        Ok(id)
    }

    fn conv(&mut self, inputs: usize, outputs: usize, kernel: usize, stride: usize) -> Result<()> {
        let weight = self.weight("conv.weight", &[outputs, kernel, inputs], kernel * inputs)?;
        let bias = self.params.add("conv.bias", &[outputs])?;
        self.stages.push(Stage::Conv1d {
            weight,
            bias,
            in_channels: inputs,
            out_channels: outputs,
            kernel,
            stride,
        });
        Ok(())
    }

    fn dense(&mut self, name: &str, inputs: usize, outputs: usize) -> Result<()> {
        let weight = self.weight(&format!("{name}.weight"), &[inputs, outputs], inputs)?;
        let bias = self.params.add(format!("{name}.bias"), &[outputs])?;
        self.stages.push(Stage::Dense {
            weight,
            bias,
            inputs,
            outputs,
        });
        Ok(())
    }

    /// Hidden layers with ReLU, then a linear map to `outputs`.
    fn mlp(&mut self, inputs: usize, widths: &[usize], outputs: usize) -> Result<()> {
        let mut from = inputs;
        for (i, &w) in widths.iter().enumerate() {
            self.dense(&format!("mlp{i}"), from, w)?;
            self.stages.push(Stage::Relu);
            from = w;
        }
        self.dense("out", from, outputs)
    }

    fn head(&mut self, index: usize, columns: std::ops::Range<usize>, width: usize) -> Result<HeadSpec> {
        let rows = columns.len();
        let wq = self.weight(&format!("head{index}.wq"), &[rows, width], rows)?;
        let wk = self.weight(&format!("head{index}.wk"), &[rows, width], rows)?;
        let wv = self.weight(&format!("head{index}.wv"), &[rows, width], rows)?;
        Ok(HeadSpec {
            columns,
            width,
            wq,
            wk,
            wv,
        })
    }

    /// Heads followed by an optional `Σ widths → out` projection with bias.
    fn multihead(&mut self, heads: Vec<HeadSpec>, project_to: Option<usize>) -> Result<()> {
        let total: usize = heads.iter().map(|h| h.width).sum();
        let projection = match project_to {
            Some(out) => {
                let w = self.weight("proj.weight", &[total, out], total)?;
                let b = self.params.add("proj.bias", &[out])?;
                Some((w, b))
            }
            None => None,
        };
        self.stages.push(Stage::MultiHead { heads, projection });
        Ok(())
    }
}

fn config_err<T>(msg: String) -> Result<T> {
    Err(Error::Config(msg))
}

/// Builds the pipeline of `cfg.variant` for inputs of `n` samples with `d`
/// channels and draws its initial parameters from `rng`.
pub fn build_model<T: Scalar>(cfg: &ArchitectureConfig, n: usize, d: usize, rng: &mut Rng) -> Result<Model<T>> {
    cfg.validate()?;
    if d == 0 || n < 2 {
        return config_err(format!("input must have n >= 2 samples and d >= 1 channels, got n={n}, d={d}"));
    }
    let p = cfg.outputs();
    let mut b = Builder {
        params: ParamStore::new(),
        stages: Vec::new(),
        rng,
    };
    let variant = cfg.variant;
    let conv_width = if variant == Variant::TransformerBaseline {
        cfg.transformer_channels
    } else {
        cfg.conv_channels
    };

    // Front end: stream length and channel count entering the signature.
    let (len, channels) = if variant.has_conv() {
        let Some(len) = crate::nn::conv1d_output_len(n, cfg.kernel, cfg.conv_stride) else {
            return config_err(format!("input length {n} is shorter than the conv kernel {}", cfg.kernel));
        };
        b.conv(d, conv_width, cfg.kernel, cfg.conv_stride)?;
        b.stages.push(Stage::Augment {
            time: true,
            original: true,
            kernel: cfg.kernel,
            stride: cfg.conv_stride,
        });
        (len, conv_width + 1 + d)
    } else {
        b.stages.push(Stage::Augment {
            time: true,
            original: false,
            kernel: 1,
            stride: 1,
        });
        (n, d + 1)
    };

    match variant {
        Variant::TransformerBaseline => {
            let h = cfg.head_count();
            let width = cfg.d_att.unwrap_or((channels / h).max(1));
            let heads = (0..h).map(|i| b.head(i, 0..channels, width)).collect::<Result<Vec<_>>>()?;
            b.multihead(heads, Some(channels))?;
            b.stages.push(Stage::MeanPool);
            b.mlp(channels, &cfg.mlp, p)?;
        }
        Variant::Deepsignet => {
            b.stages.push(Stage::Signature {
                depth: cfg.depth,
                lift: LiftRule::Whole,
            });
            b.mlp(sig_dim(channels, cfg.depth), &cfg.mlp, p)?;
        }
        Variant::Sigsa => {
            let big_d = sig_dim(channels, cfg.depth);
            cfg.lift.prefix_ends(len)?;
            b.stages.push(Stage::Signature {
                depth: cfg.depth,
                lift: cfg.lift,
            });
            let h = cfg.head_count();
            let width = cfg.d_att.unwrap_or((big_d / h).max(1));
            let heads = (0..h).map(|i| b.head(i, 0..big_d, width)).collect::<Result<Vec<_>>>()?;
            let project = (h > 1).then_some(big_d);
            b.multihead(heads, project)?;
            b.stages.push(Stage::MeanPool);
            b.dense("out", if h > 1 { big_d } else { width }, p)?;
        }
        _ => {
            let big_d = sig_dim(channels, cfg.depth);
            let m = cfg.lift.prefix_ends(len)?.len();
            b.stages.push(Stage::Signature {
                depth: cfg.depth,
                lift: cfg.lift,
            });
            let heads = level_spans(channels, cfg.depth)
                .into_iter()
                .enumerate()
                .map(|(i, span)| {
                    let width = cfg.d_att.unwrap_or(span.len());
                    b.head(i, span, width)
                })
                .collect::<Result<Vec<_>>>()?;
            b.multihead(heads, Some(big_d))?;
            b.stages.push(Stage::Flatten);
            if matches!(variant, Variant::Sigma | Variant::SigmaNoConv) {
                b.mlp(m * big_d, &cfg.mlp, p)?;
            } else {
                b.dense("out", m * big_d, p)?;
            }
        }
    }
    b.stages.push(Stage::Sigmoid);

    let label_names = if p == 1 {
        vec!["H".to_string()]
    } else {
        (0..p).map(|i| format!("y{i}")).collect()
    };
    Ok(Model {
        arch: cfg.clone(),
        n,
        d,
        label_names,
        network: Network::new(b.stages, b.params),
        metadata: None,
    })
}

/// Maps sigmoid outputs to parameter scale: `lo + raw·(hi − lo)` per column.
pub fn scale_outputs<T: Scalar>(raw: ArrayView2<T>, ranges: &[(f64, f64)]) -> Result<Array2<T>> {
    check_ranges(raw.ncols(), ranges)?;
    let mut out = raw.to_owned();
    for (mut col, &(lo, hi)) in out.columns_mut().into_iter().zip(ranges) {
        col.mapv_inplace(|v| T::of(lo) + v * T::of(hi - lo));
    }
    Ok(out)
}

/// Inverse of [`scale_outputs`].
pub fn normalize_labels<T: Scalar>(labels: ArrayView2<T>, ranges: &[(f64, f64)]) -> Result<Array2<T>> {
    check_ranges(labels.ncols(), ranges)?;
    let mut out = labels.to_owned();
    for (mut col, &(lo, hi)) in out.columns_mut().into_iter().zip(ranges) {
        col.mapv_inplace(|v| (v - T::of(lo)) / T::of(hi - lo));
    }
    Ok(out)
}

fn check_ranges(cols: usize, ranges: &[(f64, f64)]) -> Result<()> {
    if ranges.len() != cols {
        return shape_err(format!("{cols} columns but {} ranges", ranges.len()));
    }
    for &(lo, hi) in ranges {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Range(format!("range ({lo}, {hi}) must be finite with lo < hi")));
        }
    }
    Ok(())
}

impl<T: Scalar> Clone for Model<T> {
    fn clone(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            n: self.n,
            d: self.d,
            label_names: self.label_names.clone(),
            network: self.network.clone(),
            metadata: self.metadata.clone(),
        }
    }
}

impl<T: Scalar> Model<T> {
    pub fn architecture(&self) -> &ArchitectureConfig {
        &self.arch
    }

    /// Expected input shape `(n, d)`.
    pub fn input_shape(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn set_label_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.arch.outputs() {
            return shape_err(format!("{} label names for {} outputs", names.len(), self.arch.outputs()));
        }
        self.label_names = names;
        Ok(())
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.arch.ranges
    }

    pub fn metadata(&self) -> Option<&TrainingMetadata> {
        self.metadata.as_ref()
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network<T> {
        &mut self.network
    }

    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    pub(crate) fn check_inputs(&self, paths: &[ArrayView2<T>]) -> Result<()> {
        for (i, p) in paths.iter().enumerate() {
            if p.dim() != (self.n, self.d) {
                return shape_err(format!(
                    "path {i} has shape {:?}, model expects ({}, {})",
                    p.dim(),
                    self.n,
                    self.d
                ));
            }
        }
        Ok(())
    }

    /// Sigmoid outputs in (0,1)^p, one row per path.
    pub fn predict_normalized(&self, paths: &[ArrayView2<T>]) -> Result<Array2<T>> {
        self.check_inputs(paths)?;
        self.network.infer(paths)
    }

    /// Parameter estimates on the label scale.
    pub fn predict(&self, paths: &[ArrayView2<T>]) -> Result<Array2<T>> {
        scale_outputs(self.predict_normalized(paths)?.view(), &self.arch.ranges)
    }
}

/// Total number of trainable scalars.
pub fn param_count<T: Scalar>(model: &Model<T>) -> usize {
    model.param_count()
}
