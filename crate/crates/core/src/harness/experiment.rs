use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::metrics::{average_rmse, average_rse_stats, per_parameter_rmse, RseStats};
use crate::error::{Error, Result};
use crate::models::{build_model, train, write_history, ArchitectureConfig, Model, TrainConfig};
use crate::numerics::Rng;
use crate::pathsim::{generate_dataset, write_dataset, DatasetSpec, LabeledDataset, ProcessKind, SamplingRule};
use crate::Scalar;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Child-stream indices of the master seed.
const TRAIN_STREAM: u64 = 0;
const TEST_STREAM: u64 = 1;
const REPLICATE_STREAM: u64 = 2;

fn default_horizon() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub process: ProcessKind,
    pub n: usize,
    pub train: usize,
    pub test: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub hurst: SamplingRule,
    #[serde(default)]
    pub params: BTreeMap<String, SamplingRule>,
}

impl DataConfig {
    pub fn spec(&self, count: usize) -> DatasetSpec {
        DatasetSpec {
            process: self.process,
            n: self.n,
            count,
            horizon: self.horizon,
            hurst: self.hurst.clone(),
            params: self.params.clone(),
        }
    }
}

fn default_replicates() -> usize {
    3
}

/// Everything needed to reproduce one experiment from a single seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Output directory; relative paths resolve against the working directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub data: DataConfig,
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub training: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Fills default output ranges from the sampling rules and checks consistency.
    pub fn resolve(&mut self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        let spec = self.data.spec(self.data.train);
        spec.validate()?;
        if self.data.test == 0 || self.data.train == 0 {
            return Err(Error::Config("train and test sizes must be >= 1".into()));
        }
        let ranges: Vec<(f64, f64)> = label_ranges(&spec);
        if self.architecture.ranges == ArchitectureConfig::new(self.architecture.variant).ranges {
            self.architecture.ranges = ranges.clone();
        }
        if self.architecture.outputs() != ranges.len() {
            return Err(Error::Config(format!(
                "architecture has {} output ranges but the data has {} labels",
                self.architecture.outputs(),
                ranges.len()
            )));
        }
        self.architecture.validate()?;
        self.training.validate()
    }

    /// Seed of replicate `r`.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        Rng::new(self.seed).split(REPLICATE_STREAM + r as u64).seed()
    }
}

fn label_ranges(spec: &DatasetSpec) -> Vec<(f64, f64)> {
    let names = spec.label_names();
    names
        .iter()
        .map(|name| {
            if name == "H" {
                spec.hurst.support()
            } else {
                spec.params[name].support()
            }
        })
        .collect()
}

/// Accuracy of a model on a labelled set, on the label scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub label_names: Vec<String>,
    pub per_parameter_rmse: Vec<f64>,
    pub average_rmse: f64,
    pub rse: RseStats,
}

pub fn evaluate_predictions<T: Scalar>(
    preds: ArrayView2<T>,
    targets: ArrayView2<T>,
    label_names: &[String],
) -> Result<Evaluation> {
    Ok(Evaluation {
        label_names: label_names.to_vec(),
        per_parameter_rmse: per_parameter_rmse(preds, targets)?,
        average_rmse: average_rmse(preds, targets)?,
        rse: average_rse_stats(preds, targets)?,
    })
}

/// Predicts every path of `data` and scores the estimates.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &LabeledDataset<T>) -> Result<(Array2<T>, Evaluation)> {
    if data.label_dim() != model.architecture().outputs() {
        return Err(Error::ShapeMismatch(format!(
            "data has {} labels, model has {} outputs",
            data.label_dim(),
            model.architecture().outputs()
        )));
    }
    let views: Vec<_> = data.paths.iter().map(|p| p.values.view()).collect();
    let preds = model.predict(&views)?;
    let eval = evaluate_predictions(preds.view(), data.labels.view(), &data.label_names)?;
    Ok((preds, eval))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub replicate: usize,
    pub seed: u64,
    pub final_train_rmse: f64,
    pub final_val_rmse: Option<f64>,
    pub test: Evaluation,
}

/// Results of [`run_experiment`]. `wall_clock_seconds` is written to a
/// separate file so the report JSON stays reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub format_version: u32,
    pub name: String,
    pub master_seed: u64,
    pub process: ProcessKind,
    pub n: usize,
    pub variant: String,
    pub param_count: usize,
    pub label_names: Vec<String>,
    pub replicates: Vec<ReplicateReport>,
    /// Replicate means.
    pub per_parameter_rmse: Vec<f64>,
    pub average_rmse: f64,
    pub rse: RseStats,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

fn write_predictions<T: Scalar>(path: &FsPath, names: &[String], preds: &Array2<T>, targets: &Array2<T>) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = names
        .iter()
        .map(|n| format!("pred:{n}"))
        .chain(names.iter().map(|n| format!("true:{n}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (p, t) in preds.rows().into_iter().zip(targets.rows()) {
        let row: Vec<String> = p.iter().chain(t.iter()).map(|v| v.as_f64().to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_json<S: Serialize>(path: &FsPath, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Generates the data, trains every replicate, scores them on the shared
/// test set and writes all artifacts under `out`. On failure a `FAILED`
/// file holding the error is left next to whatever was written.
pub fn run_experiment(cfg: &ExperimentConfig, out: &FsPath) -> Result<EstimateReport> {
    run_experiment_with_progress(cfg, out, |_| {})
}

pub fn run_experiment_with_progress(
    cfg: &ExperimentConfig,
    out: &FsPath,
    mut log: impl FnMut(&str),
) -> Result<EstimateReport> {
    fs::create_dir_all(out)?;
    let failed = out.join("FAILED");
    if failed.exists() {
        fs::remove_file(&failed)?;
    }
    let result = run_inner(cfg, out, &mut log);
    if let Err(e) = &result {
        fs::write(&failed, format!("{}: {e}\n", e.kind()))?;
    }
    result
}

fn run_inner(cfg: &ExperimentConfig, out: &FsPath, log: &mut dyn FnMut(&str)) -> Result<EstimateReport> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.resolve()?;
    fs::write(
        out.join("config.toml"),
        toml::to_string(&cfg).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    let master = Rng::new(cfg.seed);
    log("generating datasets");
    let train_set: LabeledDataset<f64> = generate_dataset(&master.split(TRAIN_STREAM), &cfg.data.spec(cfg.data.train))?;
    let test_set: LabeledDataset<f64> = generate_dataset(&master.split(TEST_STREAM), &cfg.data.spec(cfg.data.test))?;
    let data_dir = out.join("data");
    fs::create_dir_all(&data_dir)?;
    write_dataset(&train_set, &data_dir.join("train"))?;
    write_dataset(&test_set, &data_dir.join("test"))?;

    let mut reps = Vec::with_capacity(cfg.replicates);
    let mut param_count = 0;
    for r in 0..cfg.replicates {
        let seed = cfg.replicate_seed(r);
        let dir = out.join(format!("replicate-{r}"));
        fs::create_dir_all(&dir)?;
        let mut model: Model<f64> = build_model(&cfg.architecture, cfg.data.n, 1, &mut Rng::new(seed).split(0))?;
        model.set_label_names(train_set.label_names.clone())?;
        param_count = model.param_count();
        let tc = TrainConfig {
            seed,
            ..cfg.training.clone()
        };
        log(&format!("replicate {r}: training {} parameters", param_count));
        let history = train(&mut model, &train_set, Some(&test_set), &tc)?;
        write_history(&history, &dir.join("history.csv"))?;
        model.save(&dir.join("model.json"))?;
        let (preds, eval) = evaluate(&model, &test_set)?;
        write_predictions(&dir.join("predictions.csv"), &test_set.label_names, &preds, &test_set.labels)?;
        let last = history.last().expect("epochs >= 1");
        let rep = ReplicateReport {
            replicate: r,
            seed,
            final_train_rmse: last.train_rmse,
            final_val_rmse: last.val_rmse,
            test: eval,
        };
        write_json(&dir.join("metrics.json"), &rep)?;
        log(&format!("replicate {r}: test average RMSE {:.6e}", rep.test.average_rmse));
        reps.push(rep);
    }

    let p = test_set.label_dim();
    let report = EstimateReport {
        format_version: REPORT_FORMAT_VERSION,
        name: cfg.name.clone(),
        master_seed: cfg.seed,
        process: cfg.data.process,
        n: cfg.data.n,
        variant: cfg.architecture.variant.to_string(),
        param_count,
        label_names: test_set.label_names.clone(),
        per_parameter_rmse: (0..p).map(|j| mean(reps.iter().map(|r| r.test.per_parameter_rmse[j]))).collect(),
        average_rmse: mean(reps.iter().map(|r| r.test.average_rmse)),
        rse: RseStats {
            max: mean(reps.iter().map(|r| r.test.rse.max)),
            q75: mean(reps.iter().map(|r| r.test.rse.q75)),
            q25: mean(reps.iter().map(|r| r.test.rse.q25)),
        },
        replicates: reps,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("report.json"), &report)?;
    write_json(
        &out.join("timing.json"),
        &serde_json::json!({ "wall_clock_seconds": report.wall_clock_seconds }),
    )?;
    Ok(report)
}
