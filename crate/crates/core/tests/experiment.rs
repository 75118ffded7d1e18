use std::fs;

use sigma_core::harness::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
name = "smoke"
seed = 42
replicates = 1

[data]
process = "fbm"
n = 30
train = 200
test = 40
hurst = "uniform:0,1"

[architecture]
variant = "sigma"
mlp = [8, 8]

[training]
epochs = 10
batch_size = 20
lr = 1e-3
"#;

fn scratch(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("sigma-exp-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn smoke_run_writes_every_artifact() {
    let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
    let out = scratch("smoke");
    let report = run_experiment(&cfg, &out).unwrap();
    assert!(report.average_rmse.is_finite());
    assert!(report.rse.q25 <= report.rse.q75 && report.rse.q75 <= report.rse.max);
    for f in [
        "report.json",
        "timing.json",
        "config.toml",
        "data/train.csv",
        "data/test.json",
        "replicate-0/model.json",
        "replicate-0/history.csv",
        "replicate-0/predictions.csv",
        "replicate-0/metrics.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(!out.join("FAILED").exists());
    let history = fs::read_to_string(out.join("replicate-0/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 11);
    assert!(history.starts_with("epoch,train_rmse,val_rmse\n"));
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn same_seed_same_report_bytes() {
    let mut cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
    cfg.data.train = 60;
    cfg.training.epochs = 2;
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    run_experiment(&cfg, &a).unwrap();
    run_experiment(&cfg, &b).unwrap();
    let ra = fs::read(a.join("report.json")).unwrap();
    let rb = fs::read(b.join("report.json")).unwrap();
    assert_eq!(ra, rb);
    fs::remove_dir_all(&a).unwrap();
    fs::remove_dir_all(&b).unwrap();
}

#[test]
fn failure_leaves_marker() {
    let mut cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
    cfg.data.train = 20;
    cfg.training.epochs = 1;
    // A NaN learning rate passes parsing but is rejected once the run starts.
    cfg.training.lr = f64::NAN;
    let out = scratch("fail");
    let err = run_experiment(&cfg, &out).unwrap_err();
    assert_eq!(err.kind(), "ConfigError");
    let marker = fs::read_to_string(out.join("FAILED")).unwrap();
    assert!(marker.starts_with("ConfigError"));
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn config_consistency_is_checked() {
    let bad = CONFIG.replace("mlp = [8, 8]", "mlp = [8, 8]\nranges = [[0.0, 1.0], [0.0, 2.0]]");
    assert_eq!(ExperimentConfig::from_toml(&bad).unwrap_err().kind(), "ConfigError");
    let bad = CONFIG.replace("replicates = 1", "replicates = 0");
    assert_eq!(ExperimentConfig::from_toml(&bad).unwrap_err().kind(), "ConfigError");
    let fou = CONFIG
        .replace("process = \"fbm\"", "process = \"fou\"")
        .replace("hurst = \"uniform:0,1\"", "hurst = \"uniform:0.5,1\"\nparams = { alpha = \"uniform:0,5\" }");
    let cfg = ExperimentConfig::from_toml(&fou).unwrap();
    assert_eq!(cfg.architecture.ranges, vec![(0.5, 1.0), (0.0, 5.0)]);
}
