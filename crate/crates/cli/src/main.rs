use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigma_core::estimators::{HurstMethod, WindowSpec};
use sigma_core::harness::{
    cmd_estimate, evaluate, hurst_series, hurst_windows, read_series_csv, run_experiment_with_progress,
    write_windows_csv, ExperimentConfig, HurstOptions, WindowEstimate, WindowSummary,
};
use sigma_core::models::{build_model, train_with_progress, write_history, ArchitectureConfig, TrainConfig, Variant};
use sigma_core::nn::LiftRule;
use sigma_core::numerics::Rng;
use sigma_core::pathsim::{generate_dataset, read_dataset, write_dataset, DatasetSpec, ProcessKind, SamplingRule};
use sigma_core::{Error, LabeledDataset, Model, Result};

#[derive(Parser)]
#[command(name = "sigma", version, about = "Signature and attention based parameter estimation for rough paths")]
struct Cli {
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled dataset (PREFIX.csv + PREFIX.json).
    Simulate(SimulateArgs),
    /// Train a model on a dataset written by `simulate`.
    Train(TrainArgs),
    /// Score a trained model on a labelled dataset.
    Evaluate(EvaluateArgs),
    /// Sliding-window estimates of a series column with a trained model.
    Estimate(EstimateArgs),
    /// Classical Hurst estimates (Higuchi or rescaled range).
    Hurst(HurstArgs),
    /// Run a full experiment from a TOML config.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    process: ProcessKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    count: usize,
    /// Hurst sampling rule: set:a,b,..|uniform:a,b|beta:a,b|fixed:v.
    #[arg(long)]
    hurst: SamplingRule,
    /// Extra parameter rules as NAME=RULE, e.g. alpha=uniform:0,5.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, SamplingRule)>,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes PREFIX.csv and PREFIX.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset prefix.
    #[arg(long)]
    train: PathBuf,
    /// Validation dataset prefix.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Architecture TOML; flags below override its fields.
    #[arg(long)]
    arch: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    d_att: Option<usize>,
    /// half | whole | stride:S
    #[arg(long)]
    lift: Option<LiftRule>,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    #[arg(long, default_value_t = 60)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_shuffle: bool,
    /// Model JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV (epoch,train_rmse,val_rmse).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Metrics JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    column: String,
    /// Column whose window means serve as reference estimates.
    #[arg(long)]
    reference: Option<String>,
    /// Output prefix; writes PREFIX.csv and PREFIX.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    io: WindowArgs,
    #[arg(long, default_value_t = 100)]
    window: usize,
    #[arg(long, default_value_t = 10)]
    step: usize,
}

#[derive(Args)]
struct HurstArgs {
    #[arg(long)]
    method: HurstMethod,
    #[command(flatten)]
    io: WindowArgs,
    /// Difference the series first (for level series fed to R/S).
    #[arg(long)]
    increments: bool,
    /// Remove a least-squares line before estimating.
    #[arg(long)]
    detrend: bool,
    #[arg(long)]
    kmax: Option<usize>,
    /// Sliding-window mode when set.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 10)]
    step: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_param(s: &str) -> std::result::Result<(String, SamplingRule), String> {
    let (name, rule) = s.split_once('=').ok_or_else(|| format!("expected NAME=RULE, got '{s}'"))?;
    Ok((name.to_string(), rule.parse().map_err(|e: Error| e.to_string())?))
}

struct Ctx {
    quiet: bool,
}

impl Ctx {
    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn write_json<S: serde::Serialize>(path: &FsPath, value: &S) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let mut spec = DatasetSpec::new(a.process, a.n, a.count, a.hurst);
    spec.horizon = a.horizon;
    for (name, rule) in a.params {
        spec = spec.with_param(&name, rule);
    }
    let data: LabeledDataset = generate_dataset(&Rng::new(a.seed), &spec)?;
    write_dataset(&data, &a.out)?;
    ctx.log(&format!("wrote {} paths to {}.csv", data.len(), a.out.display()));
    Ok(())
}

fn train_cmd(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let train_set: LabeledDataset = read_dataset(&a.train)?;
    let val_set: Option<LabeledDataset> = a.val.as_deref().map(read_dataset).transpose()?;
    let mut arch = match &a.arch {
        Some(p) => toml::from_str::<ArchitectureConfig>(&fs::read_to_string(p)?)
            .map_err(|e| Error::Parse(e.to_string()))?,
        None => ArchitectureConfig::new(a.variant.unwrap_or(Variant::Sigma)),
    };
    if let Some(v) = a.variant {
        arch.variant = v;
    }
    if let Some(d) = a.depth {
        arch.depth = d;
    }
    if a.heads.is_some() {
        arch.heads = a.heads;
    }
    if a.d_att.is_some() {
        arch.d_att = a.d_att;
    }
    if let Some(l) = a.lift {
        arch.lift = l;
    }
    arch.ranges = train_set.ranges.clone();
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed,
        shuffle: !a.no_shuffle,
    };
    let mut model: Model = build_model(&arch, train_set.path_len(), 1, &mut Rng::new(a.seed).split(0))?;
    model.set_label_names(train_set.label_names.clone())?;
    ctx.log(&format!("{}: {} parameters", arch.variant, model.param_count()));
    let history = train_with_progress(&mut model, &train_set, val_set.as_ref(), &tc, |r| {
        let val = r.val_rmse.map(|v| format!(" val_rmse={v:.6e}")).unwrap_or_default();
        ctx.log(&format!("epoch {} train_rmse={:.6e}{val}", r.epoch, r.train_rmse));
    })?;
    model.save(&a.out)?;
    if let Some(h) = &a.history {
        write_history(&history, h)?;
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let data: LabeledDataset = read_dataset(&a.data)?;
    let (_, eval) = evaluate(&model, &data)?;
    match &a.out {
        Some(p) => write_json(p, &eval),
        None => {
            println!("{}", serde_json::to_string_pretty(&eval)?);
            Ok(())
        }
    }
}

fn emit_windows(out: Option<&FsPath>, rows: &[WindowEstimate], summary: &WindowSummary) -> Result<()> {
    match out {
        Some(prefix) => {
            write_windows_csv(&prefix.with_extension("csv"), rows)?;
            write_json(&prefix.with_extension("json"), summary)
        }
        None => {
            print!("{}", sigma_core::harness::windows_csv(rows));
            eprintln!("{}", serde_json::to_string(summary)?);
            Ok(())
        }
    }
}

fn read_reference(io: &WindowArgs) -> Result<Option<Vec<f64>>> {
    io.reference.as_deref().map(|c| read_series_csv(&io.series, c)).transpose()
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let series = read_series_csv(&a.io.series, &a.io.column)?;
    let reference = read_reference(&a.io)?;
    let spec = WindowSpec {
        window: a.window,
        step: a.step,
    };
    let (rows, summary) = cmd_estimate(&model, &series, spec, reference.as_deref())?;
    emit_windows(a.io.out.as_deref(), &rows, &summary)
}

fn hurst_cmd(a: HurstArgs) -> Result<()> {
    let series = read_series_csv(&a.io.series, &a.io.column)?;
    let opts = HurstOptions {
        method: a.method,
        increments: a.increments,
        detrend: a.detrend,
        k_max: a.kmax,
    };
    match a.window {
        Some(window) => {
            let reference = read_reference(&a.io)?;
            let spec = WindowSpec { window, step: a.step };
            let (rows, summary) = hurst_windows(&series, spec, &opts, reference.as_deref())?;
            emit_windows(a.io.out.as_deref(), &rows, &summary)
        }
        None => {
            let est = hurst_series(&series, &opts)?;
            let doc = serde_json::json!({
                "method": a.method.to_string(),
                "n": series.len(),
                "estimate": est.value,
                "raw": est.raw,
            });
            match &a.io.out {
                Some(p) => write_json(&p.with_extension("json"), &doc),
                None => {
                    println!("{}", serde_json::to_string_pretty(&doc)?);
                    Ok(())
                }
            }
        }
    }
}

fn experiment_cmd(ctx: &Ctx, a: ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let out = a
        .out
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::Config("no output directory: set `output` in the config or pass --out".into()))?;
    let report = run_experiment_with_progress(&cfg, &out, |m| ctx.log(m))?;
    ctx.log(&format!(
        "average RMSE {:.6e} over {} replicate(s); report in {}",
        report.average_rmse,
        report.replicates.len(),
        out.join("report.json").display()
    ));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx { quiet: cli.quiet };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Hurst(a) => hurst_cmd(a),
        Command::Experiment(a) => experiment_cmd(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: UsageError: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
