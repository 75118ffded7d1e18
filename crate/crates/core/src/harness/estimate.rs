use std::fs;
use std::path::Path as FsPath;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    confidence_interval, higuchi, increments, linear_detrend, rescaled_range, sliding_window_estimates,
    ConfidenceInterval, HurstMethod, WindowSpec,
};
use crate::models::Model;
use crate::Scalar;

/// Floor applied to a window's standard deviation before z-scoring.
pub const MIN_WINDOW_STD: f64 = 1e-12;

/// Reads one numeric column, selected by header name, from a CSV file.
pub fn read_series_csv(path: &FsPath, column: &str) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let idx = headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::Parse(format!("column '{column}' not found in {}", path.display())))?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let field = rec.get(idx).unwrap_or("").trim();
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: '{field}' is not a number", line + 2)))?;
        out.push(v);
    }
    Ok(out)
}

/// Z-scored copy of a window and whether its spread hit the floor.
pub fn zscore(window: &[f64]) -> (Vec<f64>, bool) {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let sd = (window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let flat = sd < MIN_WINDOW_STD;
    let scale = sd.max(MIN_WINDOW_STD);
    (window.iter().map(|v| (v - mean) / scale).collect(), flat)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub start: usize,
    pub estimate: f64,
    /// Unclamped fit for classical estimators; equals `estimate` for models.
    pub raw: f64,
    /// Zero-variance window (model estimates only).
    pub flat: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub method: String,
    pub windows: usize,
    pub window: usize,
    pub step: usize,
    pub mean: f64,
    pub std: f64,
    pub ci95: Option<(f64, f64)>,
    pub flat_windows: Vec<usize>,
    /// Sample std of `estimate − reference` over windows, the reference being
    /// the window mean of a user-supplied column.
    pub reference_diff_std: Option<f64>,
}

fn summarize(method: &str, spec: WindowSpec, rows: &[WindowEstimate], reference: Option<&[f64]>) -> WindowSummary {
    let est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    let m = est.len() as f64;
    let mean = est.iter().sum::<f64>() / m;
    let ci: Option<ConfidenceInterval> = confidence_interval(&est, 0.95).ok();
    let std = ci.map(|c| c.std).unwrap_or(0.0);
    let reference_diff_std = reference.and_then(|r| {
        let diffs: Vec<f64> = rows
            .iter()
            .map(|row| {
                let w = &r[row.start..row.start + spec.window];
                row.estimate - w.iter().sum::<f64>() / w.len() as f64
            })
            .collect();
        confidence_interval(&diffs, 0.95).ok().map(|c| c.std)
    });
    WindowSummary {
        method: method.to_string(),
        windows: rows.len(),
        window: spec.window,
        step: spec.step,
        mean,
        std,
        ci95: ci.map(|c| (c.lo, c.hi)),
        flat_windows: rows.iter().filter(|r| r.flat).map(|r| r.start).collect(),
        reference_diff_std,
    }
}

fn check_reference(series: &[f64], reference: Option<&[f64]>) -> Result<()> {
    match reference {
        Some(r) if r.len() != series.len() => Err(Error::LengthMismatch(format!(
            "reference column has {} rows, series has {}",
            r.len(),
            series.len()
        ))),
        _ => Ok(()),
    }
}

/// Sliding-window estimates from a trained model. Each window is z-scored
/// and fed as a one-channel path; the first model output is reported.
pub fn cmd_estimate<T: Scalar>(
    model: &Model<T>,
    series: &[f64],
    spec: WindowSpec,
    reference: Option<&[f64]>,
) -> Result<(Vec<WindowEstimate>, WindowSummary)> {
    let (n, d) = model.input_shape();
    if spec.window != n || d != 1 {
        return Err(Error::LengthMismatch(format!(
            "window length {} but the model expects {n} samples of {d} channel(s)",
            spec.window
        )));
    }
    check_reference(series, reference)?;
    let starts = spec.starts(series.len())?;
    let mut flags = Vec::with_capacity(starts.len());
    let mut inputs = Vec::with_capacity(starts.len());
    for &s in &starts {
        let (z, flat) = zscore(&series[s..s + n]);
        flags.push(flat);
        inputs.push(Array2::from_shape_fn((n, 1), |(i, _)| T::of(z[i])));
    }
    let views: Vec<_> = inputs.iter().map(|x| x.view()).collect();
    let preds = model.predict(&views)?;
    let rows: Vec<WindowEstimate> = starts
        .iter()
        .zip(&flags)
        .enumerate()
        .map(|(i, (&start, &flat))| {
            let v = preds[[i, 0]].as_f64();
            WindowEstimate {
                start,
                estimate: v,
                raw: v,
                flat,
            }
        })
        .collect();
    let summary = summarize("model", spec, &rows, reference);
    Ok((rows, summary))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HurstOptions {
    pub method: HurstMethod,
    /// Difference the series before estimating.
    pub increments: bool,
    pub detrend: bool,
    pub k_max: Option<usize>,
}

fn classical(opts: &HurstOptions, x: &[f64]) -> Result<crate::estimators::HurstEstimate> {
    let mut x = x.to_vec();
    if opts.detrend {
        x = linear_detrend(&x);
    }
    if opts.increments {
        x = increments(&x);
    }
    match opts.method {
        HurstMethod::Higuchi => higuchi(&x, opts.k_max),
        HurstMethod::Rs => rescaled_range(&x),
    }
}

/// Classical estimate of the whole series.
pub fn hurst_series(series: &[f64], opts: &HurstOptions) -> Result<crate::estimators::HurstEstimate> {
    classical(opts, series)
}

/// Classical estimates over sliding windows.
pub fn hurst_windows(
    series: &[f64],
    spec: WindowSpec,
    opts: &HurstOptions,
    reference: Option<&[f64]>,
) -> Result<(Vec<WindowEstimate>, WindowSummary)> {
    check_reference(series, reference)?;
    let raw = sliding_window_estimates(series, spec, |w| classical(opts, w).map(|e| e.raw))?;
    let rows: Vec<WindowEstimate> = raw
        .into_iter()
        .map(|(start, r)| WindowEstimate {
            start,
            estimate: r.clamp(0.0, 1.0),
            raw: r,
            flat: false,
        })
        .collect();
    let summary = summarize(&opts.method.to_string(), spec, &rows, reference);
    Ok((rows, summary))
}

/// `start,estimate,raw,flat` rows.
pub fn write_windows_csv(path: &FsPath, rows: &[WindowEstimate]) -> Result<()> {
    fs::write(path, windows_csv(rows))?;
    Ok(())
}

pub fn windows_csv(rows: &[WindowEstimate]) -> String {
    let mut s = String::from("start,estimate,raw,flat\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.start, r.estimate, r.raw, r.flat));
    }
    s
}
