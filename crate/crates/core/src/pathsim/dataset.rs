use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path as FsPath;
use std::str::FromStr;

use ndarray::Array2;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::process::{
    simulate_fbm, simulate_fou, simulate_rheston, FactorCache, FouParams, Path, ProcessKind,
    RHestonParams,
};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::Scalar;

/// How one parameter is drawn for each path.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplingRule {
    /// Uniform choice from a finite set.
    Set(Vec<f64>),
    Uniform(f64, f64),
    Beta(f64, f64),
    /// Held constant; not part of the label vector.
    Fixed(f64),
}

impl SamplingRule {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            SamplingRule::Set(vals) => vals[rng.below(vals.len())],
            SamplingRule::Uniform(a, b) => rng.uniform_range(*a, *b),
            SamplingRule::Beta(a, b) => Beta::new(*a, *b).expect("validated").sample(rng),
            SamplingRule::Fixed(v) => *v,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, SamplingRule::Fixed(_))
    }

    /// Interval every draw falls into. Sets inside the unit interval report
    /// `(0, 1)`; other sets report their extremes.
    pub fn support(&self) -> (f64, f64) {
        match self {
            SamplingRule::Set(vals) => {
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if lo >= 0.0 && hi <= 1.0 {
                    (0.0, 1.0)
                } else {
                    (lo, hi)
                }
            }
            SamplingRule::Uniform(a, b) => (*a, *b),
            SamplingRule::Beta(..) => (0.0, 1.0),
            SamplingRule::Fixed(v) => (*v, *v),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            SamplingRule::Set(v) => !v.is_empty() && v.iter().all(|x| x.is_finite()),
            SamplingRule::Uniform(a, b) => a.is_finite() && b.is_finite() && a < b,
            SamplingRule::Beta(a, b) => *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite(),
            SamplingRule::Fixed(v) => v.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parse(format!("invalid sampling rule '{self}'")))
        }
    }
}

impl fmt::Display for SamplingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingRule::Set(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "set:{}", parts.join(","))
            }
            SamplingRule::Uniform(a, b) => write!(f, "uniform:{a},{b}"),
            SamplingRule::Beta(a, b) => write!(f, "beta:{a},{b}"),
            SamplingRule::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for SamplingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("sampling rule '{s}' lacks a ':'")))?;
        let nums = args
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number '{x}' in rule '{s}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let pair = |nums: &[f64]| -> Result<(f64, f64)> {
            match nums {
                [a, b] => Ok((*a, *b)),
                _ => Err(Error::Parse(format!("rule '{s}' needs two numbers"))),
            }
        };
        let rule = match kind {
            "set" => SamplingRule::Set(nums),
            "uniform" => {
                let (a, b) = pair(&nums)?;
                SamplingRule::Uniform(a, b)
            }
            "beta" => {
                let (a, b) = pair(&nums)?;
                SamplingRule::Beta(a, b)
            }
            "fixed" => match nums.as_slice() {
                [v] => SamplingRule::Fixed(*v),
                _ => return Err(Error::Parse(format!("rule '{s}' needs one number"))),
            },
            other => return Err(Error::Parse(format!("unknown sampling rule '{other}'"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl Serialize for SamplingRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SamplingRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Model parameters (besides H) of each process, in label order.
fn parameter_names(process: ProcessKind) -> &'static [&'static str] {
    match process {
        ProcessKind::Fbm => &[],
        ProcessKind::Fou => &["alpha", "mu", "sigma", "x0"],
        ProcessKind::Rheston => &["kappa1", "kappa2", "theta", "x0"],
    }
}

fn default_value(process: ProcessKind, name: &str) -> f64 {
    match (process, name) {
        (ProcessKind::Fou, "alpha") => FouParams::default().alpha,
        (ProcessKind::Fou, "mu") => FouParams::default().mu,
        (ProcessKind::Fou, "sigma") => FouParams::default().sigma,
        (ProcessKind::Fou, "x0") => FouParams::default().x0,
        (ProcessKind::Rheston, "kappa1") => RHestonParams::default().kappa1,
        (ProcessKind::Rheston, "kappa2") => RHestonParams::default().kappa2,
        (ProcessKind::Rheston, "theta") => RHestonParams::default().theta,
        (ProcessKind::Rheston, "x0") => RHestonParams::default().x0,
        _ => unreachable!("unknown parameter {name}"),
    }
}

/// What to simulate and how to draw the labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub process: ProcessKind,
    pub n: usize,
    pub count: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub hurst: SamplingRule,
    /// Rules for the remaining model parameters; missing entries are held at
    /// their defaults.
    #[serde(default)]
    pub params: BTreeMap<String, SamplingRule>,
}

fn default_horizon() -> f64 {
    1.0
}

impl DatasetSpec {
    pub fn new(process: ProcessKind, n: usize, count: usize, hurst: SamplingRule) -> Self {
        Self {
            process,
            n,
            count,
            horizon: 1.0,
            hurst,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, name: &str, rule: SamplingRule) -> Self {
        self.params.insert(name.to_string(), rule);
        self
    }

    /// Effective rule of every parameter, H first, then the process order.
    fn rules(&self) -> Vec<(String, SamplingRule)> {
        let mut out = vec![("H".to_string(), self.hurst.clone())];
        for &name in parameter_names(self.process) {
            let rule = self
                .params
                .get(name)
                .cloned()
                .unwrap_or(SamplingRule::Fixed(default_value(self.process, name)));
            out.push((name.to_string(), rule));
        }
        out
    }

    pub fn label_names(&self) -> Vec<String> {
        self.rules()
            .into_iter()
            .filter(|(_, r)| !r.is_fixed())
            .map(|(n, _)| n)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("paths need n >= 2, got {}", self.n)));
        }
        if self.count == 0 {
            return Err(Error::Config("dataset count must be at least 1".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let known = parameter_names(self.process);
        for name in self.params.keys() {
            if !known.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "process {} has no parameter '{name}'",
                    self.process
                )));
            }
        }
        for (_, rule) in self.rules() {
            rule.validate()?;
        }
        Ok(())
    }
}

/// Paths with their ground-truth label vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    pub paths: Vec<Path<T>>,
    /// `count × p`, columns ordered as `label_names`.
    pub labels: Array2<T>,
    pub label_names: Vec<String>,
    /// Sampling support of each label.
    pub ranges: Vec<(f64, f64)>,
    pub spec: DatasetSpec,
    pub seed: u64,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn path_len(&self) -> usize {
        self.spec.n
    }

    pub fn label_dim(&self) -> usize {
        self.label_names.len()
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            process: self.spec.process,
            n: self.spec.n,
            d: 1,
            horizon: self.spec.horizon,
            seed: self.seed,
            count: self.len(),
            labels: self.label_names.clone(),
            sampling: self
                .spec
                .rules()
                .into_iter()
                .collect::<BTreeMap<String, SamplingRule>>(),
        }
    }
}

fn simulate_one<T: Scalar>(
    spec: &DatasetSpec,
    rules: &[(String, SamplingRule)],
    rng: &mut Rng,
    cache: &FactorCache<T>,
) -> Result<(Path<T>, Vec<f64>)> {
    let mut draws: Vec<f64> = rules.iter().map(|(_, r)| r.sample(rng)).collect();
    if spec.process == ProcessKind::Rheston {
        // rough regime only: redraw H until it falls below 1/2
        let mut tries = 0;
        while draws[0] >= 0.5 {
            tries += 1;
            if tries > 10_000 {
                return Err(Error::Domain(format!(
                    "rule {} cannot produce H < 1/2 for rough Heston",
                    rules[0].1
                )));
            }
            draws[0] = rules[0].1.sample(rng);
        }
    }
    let get = |name: &str| {
        rules
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| draws[i])
            .expect("rule present")
    };
    let hurst = T::of(draws[0]);
    let horizon = T::of(spec.horizon);
    let path = match spec.process {
        ProcessKind::Fbm => simulate_fbm(rng, hurst, spec.n, horizon, Some(cache))?,
        ProcessKind::Fou => {
            let p = FouParams {
                alpha: get("alpha"),
                mu: get("mu"),
                sigma: get("sigma"),
                x0: get("x0"),
            };
            simulate_fou(rng, hurst, spec.n, horizon, p, Some(cache))?
        }
        ProcessKind::Rheston => {
            let p = RHestonParams {
                kappa1: get("kappa1"),
                kappa2: get("kappa2"),
                theta: get("theta"),
                x0: get("x0"),
            };
            simulate_rheston(rng, hurst, spec.n, horizon, p)?
        }
    };
    let labels = rules
        .iter()
        .zip(&draws)
        .filter(|((_, r), _)| !r.is_fixed())
        .map(|(_, &v)| v)
        .collect();
    Ok((path, labels))
}

/// Simulates `spec.count` labelled paths. Path `i` is drawn from
/// `rng.split(i)`, so the result does not depend on evaluation order.
pub fn generate_dataset<T: Scalar>(rng: &Rng, spec: &DatasetSpec) -> Result<LabeledDataset<T>> {
    spec.validate()?;
    let rules = spec.rules();
    let cache = FactorCache::<T>::new();
    let rows: Vec<(Path<T>, Vec<f64>)> = (0..spec.count)
        .into_par_iter()
        .map(|i| simulate_one(spec, &rules, &mut rng.split(i as u64), &cache))
        .collect::<Result<_>>()?;
    let label_rules: Vec<&SamplingRule> = rules.iter().map(|(_, r)| r).filter(|r| !r.is_fixed()).collect();
    let p = label_rules.len();
    let mut labels = Array2::zeros((spec.count, p));
    let mut paths = Vec::with_capacity(spec.count);
    for (i, (path, lab)) in rows.into_iter().enumerate() {
        for (j, v) in lab.into_iter().enumerate() {
            labels[[i, j]] = T::of(v);
        }
        paths.push(path);
    }
    Ok(LabeledDataset {
        paths,
        labels,
        label_names: spec.label_names(),
        ranges: label_rules.iter().map(|r| r.support()).collect(),
        spec: spec.clone(),
        seed: rng.seed(),
    })
}

/// Sidecar JSON describing a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub process: ProcessKind,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub count: usize,
    pub labels: Vec<String>,
    /// Rule of every parameter, fixed ones included.
    pub sampling: BTreeMap<String, SamplingRule>,
}

impl DatasetManifest {
    fn spec(&self) -> Result<DatasetSpec> {
        let hurst = self
            .sampling
            .get("H")
            .cloned()
            .ok_or_else(|| Error::Parse("manifest lacks a rule for H".into()))?;
        let params = self
            .sampling
            .iter()
            .filter(|(k, _)| k.as_str() != "H")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(DatasetSpec {
            process: self.process,
            n: self.n,
            count: self.count,
            horizon: self.horizon,
            hurst,
            params,
        })
    }
}

/// Writes `PREFIX.csv` and `PREFIX.json`.
pub fn write_dataset<T: Scalar>(data: &LabeledDataset<T>, prefix: &FsPath) -> Result<()> {
    let csv_path = prefix.with_extension("csv");
    let json_path = prefix.with_extension("json");
    let mut w = BufWriter::new(fs::File::create(&csv_path)?);
    let mut header: Vec<String> = data.label_names.iter().map(|n| format!("label:{n}")).collect();
    header.extend((0..data.path_len()).map(|i| format!("x{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (i, path) in data.paths.iter().enumerate() {
        let mut fields: Vec<String> = data.labels.row(i).iter().map(|v| v.to_string()).collect();
        fields.extend(path.values.column(0).iter().map(|v| v.to_string()));
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    fs::write(&json_path, serde_json::to_string_pretty(&data.manifest())? + "\n")?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset<T: Scalar>(prefix: &FsPath) -> Result<LabeledDataset<T>> {
    let manifest: DatasetManifest =
        serde_json::from_str(&fs::read_to_string(prefix.with_extension("json"))?)?;
    let spec = manifest.spec()?;
    let file = fs::File::open(prefix.with_extension("csv"))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty dataset file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    let names: Vec<String> = cols
        .iter()
        .filter_map(|c| c.strip_prefix("label:").map(str::to_string))
        .collect();
    let p = names.len();
    if cols.len() != p + manifest.n || names != manifest.labels {
        return Err(Error::Parse(format!(
            "dataset header does not match manifest ({} labels, n = {})",
            manifest.labels.len(),
            manifest.n
        )));
    }
    let horizon = T::of(manifest.horizon);
    let mut paths = Vec::new();
    let mut label_rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let nums = line
            .split(',')
            .map(|x| {
                x.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: bad number '{x}'", lineno + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() != p + manifest.n {
            return Err(Error::Parse(format!("row {} has {} fields", lineno + 2, nums.len())));
        }
        label_rows.extend(nums[..p].iter().map(|&v| T::of(v)));
        let values = Array2::from_shape_fn((manifest.n, 1), |(i, _)| T::of(nums[p + i]));
        paths.push(Path::new(horizon, values, manifest.process));
    }
    let count = paths.len();
    let labels = Array2::from_shape_vec((count, p), label_rows)
        .map_err(|e| Error::Parse(e.to_string()))?;
    let ranges = names
        .iter()
        .map(|n| manifest.sampling.get(n).map(|r| r.support()))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Parse("manifest lacks a sampling rule for a label".into()))?;
    Ok(LabeledDataset {
        paths,
        labels,
        label_names: names,
        ranges,
        spec: DatasetSpec { count, ..spec },
        seed: manifest.seed,
    })
}
