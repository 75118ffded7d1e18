use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LiftRule;
use crate::numerics::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Sigma,
    Sigsa,
    Deepsignet,
    TransformerBaseline,
    SigmaNoConv,
    SigmaNoMlp,
    SigmaNoConvNoMlp,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Sigma,
        Variant::Sigsa,
        Variant::Deepsignet,
        Variant::TransformerBaseline,
        Variant::SigmaNoConv,
        Variant::SigmaNoMlp,
        Variant::SigmaNoConvNoMlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sigma => "sigma",
            Variant::Sigsa => "sigsa",
            Variant::Deepsignet => "deepsignet",
            Variant::TransformerBaseline => "transformer-baseline",
            Variant::SigmaNoConv => "sigma-no-conv",
            Variant::SigmaNoMlp => "sigma-no-mlp",
            Variant::SigmaNoConvNoMlp => "sigma-no-conv-no-mlp",
        }
    }

    pub fn has_conv(self) -> bool {
        !matches!(self, Variant::Sigsa | Variant::SigmaNoConv | Variant::SigmaNoConvNoMlp)
    }

    /// SigMA and its ablations: one attention head per signature level.
    pub fn per_level_heads(self) -> bool {
        matches!(
            self,
            Variant::Sigma | Variant::SigmaNoConv | Variant::SigmaNoMlp | Variant::SigmaNoConvNoMlp
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

fn default_three() -> usize {
    3
}
fn default_one() -> usize {
    1
}
fn default_mlp() -> Vec<usize> {
    vec![32; 5]
}
fn default_transformer_channels() -> usize {
    153
}
fn default_ranges() -> Vec<(f64, f64)> {
    vec![(0.0, 1.0)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub variant: Variant,
    #[serde(default = "default_three")]
    pub conv_channels: usize,
    #[serde(default = "default_three")]
    pub kernel: usize,
    #[serde(default = "default_one")]
    pub conv_stride: usize,
    /// Signature truncation level N.
    #[serde(default = "default_three")]
    pub depth: usize,
    #[serde(default = "default_lift")]
    pub lift: LiftRule,
    /// Number of heads; `None` means N for the SigMA family, 1 for SigSA
    /// and 3 for the transformer baseline.
    #[serde(default)]
    pub heads: Option<usize>,
    /// Per-head width; `None` means the width of the block the head reads
    /// (the level width d̃^i for per-level heads).
    #[serde(default)]
    pub d_att: Option<usize>,
    #[serde(default = "default_mlp")]
    pub mlp: Vec<usize>,
    /// Conv width of the transformer baseline.
    #[serde(default = "default_transformer_channels")]
    pub transformer_channels: usize,
    /// One `(lo, hi)` per output; the output dimension is its length.
    #[serde(default = "default_ranges")]
    pub ranges: Vec<(f64, f64)>,
}

fn default_lift() -> LiftRule {
    LiftRule::Half
}

impl ArchitectureConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            conv_channels: 3,
            kernel: 3,
            conv_stride: 1,
            depth: 3,
            lift: LiftRule::Half,
            heads: None,
            d_att: None,
            mlp: default_mlp(),
            transformer_channels: default_transformer_channels(),
            ranges: default_ranges(),
        }
    }

    pub fn with_ranges(mut self, ranges: Vec<(f64, f64)>) -> Self {
        self.ranges = ranges;
        self
    }

    pub fn outputs(&self) -> usize {
        self.ranges.len()
    }

    pub fn head_count(&self) -> usize {
        match self.heads {
            Some(h) => h,
            None if self.variant.per_level_heads() => self.depth,
            None if self.variant == Variant::Sigsa => 1,
            None => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ranges.is_empty() {
            return bad("at least one output range is required".into());
        }
        for &(lo, hi) in &self.ranges {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("output range ({lo}, {hi}) must be finite with lo < hi"));
            }
        }
        if self.depth == 0 {
            return bad("truncation depth must be >= 1".into());
        }
        if self.variant.has_conv() || self.variant == Variant::TransformerBaseline {
            if self.kernel == 0 || self.conv_stride == 0 {
                return bad("conv kernel and stride must be >= 1".into());
            }
            if self.conv_channels == 0 {
                return bad("conv channels must be >= 1".into());
            }
        }
        if self.variant.per_level_heads() && self.head_count() != self.depth {
            return bad(format!(
                "variant {} needs one head per signature level: heads = {} but depth = {}",
                self.variant,
                self.head_count(),
                self.depth
            ));
        }
        if self.head_count() == 0 {
            return bad("at least one attention head is required".into());
        }
        if self.d_att == Some(0) {
            return bad("d_att must be >= 1".into());
        }
        if self.mlp.contains(&0) {
            return bad("MLP widths must be >= 1".into());
        }
        Ok(())
    }
}

fn default_epochs() -> usize {
    150
}
fn default_batch() -> usize {
    60
}
fn default_lr() -> f64 {
    1e-4
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 60,
            lr: 1e-4,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let j = serde_json::to_string(&v).unwrap();
            assert_eq!(j, format!("\"{}\"", v.name()));
        }
        assert_eq!("cnn".parse::<Variant>().unwrap_err().kind(), "ConfigError");
    }

    #[test]
    fn sigma_ties_heads_to_depth() {
        let mut c = ArchitectureConfig::new(Variant::Sigma);
        c.validate().unwrap();
        c.heads = Some(2);
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("one head per signature level"), "{e}");
        c.variant = Variant::Sigsa;
        c.validate().unwrap();
    }

    #[test]
    fn bad_ranges_and_train_config() {
        let c = ArchitectureConfig::new(Variant::Sigma).with_ranges(vec![(1.0, 1.0)]);
        assert_eq!(c.validate().unwrap_err().kind(), "ConfigError");
        let t = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn toml_defaults() {
        let c: ArchitectureConfig = toml::from_str("variant = \"sigma\"").unwrap();
        assert_eq!(c, ArchitectureConfig::new(Variant::Sigma));
        let c: ArchitectureConfig = toml::from_str("variant = \"sigsa\"\nlift = { stride = 4 }\nd_att = 8").unwrap();
        assert_eq!(c.lift, LiftRule::Stride(4));
        assert_eq!(c.d_att, Some(8));
        let t: TrainConfig = toml::from_str("epochs = 3").unwrap();
        assert_eq!(t.batch_size, 60);
    }
}
