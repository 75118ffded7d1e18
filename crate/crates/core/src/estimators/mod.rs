//! Classical Hurst estimators and the sliding-window protocol.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// A fitted exponent clamped to `[0, 1]`, with the unclamped fit alongside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub value: f64,
    pub raw: f64,
}

impl HurstEstimate {
    fn from_raw(raw: f64) -> Self {
        Self {
            value: raw.clamp(0.0, 1.0),
            raw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HurstMethod {
    Higuchi,
    Rs,
}

impl FromStr for HurstMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "higuchi" => Ok(HurstMethod::Higuchi),
            "rs" => Ok(HurstMethod::Rs),
            _ => Err(Error::Config(format!("unknown Hurst method '{s}' (expected higuchi or rs)"))),
        }
    }
}

impl fmt::Display for HurstMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HurstMethod::Higuchi => "higuchi",
            HurstMethod::Rs => "rs",
        })
    }
}

/// Least-squares slope of `y` on `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn to_f64<T: Scalar>(series: &[T]) -> Vec<f64> {
    series.iter().map(|v| v.as_f64()).collect()
}

/// `min(20, n / 10)`.
pub fn default_kmax(n: usize) -> usize {
    (n / 10).min(20)
}

/// Higuchi's fractal-dimension method on a level series; `H = 2 − D`.
pub fn higuchi<T: Scalar>(series: &[T], k_max: Option<usize>) -> Result<HurstEstimate> {
    let x = to_f64(series);
    let n = x.len();
    if n < 10 {
        return Err(Error::Domain(format!("Higuchi needs at least 10 points, got {n}")));
    }
    let k_max = k_max.unwrap_or_else(|| default_kmax(n).max(2));
    if k_max < 2 || k_max > n / 4 {
        return Err(Error::Domain(format!("k_max = {k_max} must lie in [2, {}]", n / 4)));
    }
    let mut log_inv_k = Vec::with_capacity(k_max);
    let mut log_len = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut total = 0.0;
        for m in 0..k {
            let steps = (n - 1 - m) / k;
            let dist: f64 = (1..=steps).map(|i| (x[m + i * k] - x[m + (i - 1) * k]).abs()).sum();
            total += dist * (n - 1) as f64 / (steps * k) as f64 / k as f64;
        }
        let mean = total / k as f64;
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::DegenerateSeries(format!("curve length at k = {k} is {mean}")));
        }
        log_inv_k.push(-(k as f64).ln());
        log_len.push(mean.ln());
    }
    Ok(HurstEstimate::from_raw(2.0 - slope(&log_inv_k, &log_len)))
}

/// Rescaled-range analysis on an increment series over dyadic block lengths
/// 8, 16, ... ≤ n.
pub fn rescaled_range<T: Scalar>(series: &[T]) -> Result<HurstEstimate> {
    let x = to_f64(series);
    let n = x.len();
    if n < 32 {
        return Err(Error::Domain(format!("R/S needs at least 32 points, got {n}")));
    }
    let mut log_len = Vec::new();
    let mut log_rs = Vec::new();
    let mut len = 8;
    while len <= n {
        let mut acc = 0.0;
        let blocks = n / len;
        for b in 0..blocks {
            let block = &x[b * len..(b + 1) * len];
            let mean = block.iter().sum::<f64>() / len as f64;
            let var = block.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
            let sd = var.sqrt();
            if !(sd > 0.0) {
                return Err(Error::DegenerateSeries(format!(
                    "block {b} of length {len} has zero standard deviation"
                )));
            }
            let (mut y, mut lo, mut hi) = (0.0_f64, 0.0_f64, 0.0_f64);
            for v in block {
                y += v - mean;
                lo = lo.min(y);
                hi = hi.max(y);
            }
            acc += (hi - lo) / sd;
        }
        log_len.push((len as f64).ln());
        log_rs.push((acc / blocks as f64).ln());
        len *= 2;
    }
    Ok(HurstEstimate::from_raw(slope(&log_len, &log_rs)))
}

/// First differences.
pub fn increments<T: Scalar>(series: &[T]) -> Vec<T> {
    series.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Residuals of a least-squares line through `(i, x_i)`.
pub fn linear_detrend<T: Scalar>(series: &[T]) -> Vec<T> {
    let n = series.len();
    if n < 2 {
        return series.to_vec();
    }
    let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y = to_f64(series);
    let b = slope(&t, &y);
    let a = y.iter().sum::<f64>() / n as f64 - b * (n - 1) as f64 / 2.0;
    y.iter().zip(&t).map(|(v, ti)| T::of(v - a - b * ti)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window: usize,
    pub step: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { window: 100, step: 10 }
    }
}

impl WindowSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.step == 0 || self.step > self.window {
            return Err(Error::Config(format!(
                "window step {} must lie in [1, {}]",
                self.step, self.window
            )));
        }
        if n < self.window {
            return Err(Error::LengthMismatch(format!(
                "series of length {n} is shorter than the window {}",
                self.window
            )));
        }
        Ok(())
    }

    /// `floor((n − w) / step) + 1` window starts.
    pub fn starts(&self, n: usize) -> Result<Vec<usize>> {
        self.validate(n)?;
        Ok((0..=(n - self.window) / self.step).map(|i| i * self.step).collect())
    }
}

/// Applies `estimator` to every window; windows run in parallel and results
/// come back in start order.
pub fn sliding_window_estimates<T, F>(series: &[T], spec: WindowSpec, estimator: F) -> Result<Vec<(usize, f64)>>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<f64> + Sync,
{
    spec.starts(series.len())?
        .into_par_iter()
        .map(|s| estimator(&series[s..s + spec.window]).map(|h| (s, h)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

/// Normal-approximation interval `mean ± z·s/√m` for levels 0.90, 0.95, 0.99.
pub fn confidence_interval(estimates: &[f64], level: f64) -> Result<ConfidenceInterval> {
    let z = [(0.90, 1.644854), (0.95, 1.959964), (0.99, 2.575829)]
        .iter()
        .find(|(l, _)| (l - level).abs() < 1e-12)
        .map(|&(_, z)| z)
        .ok_or_else(|| Error::Domain(format!("unsupported confidence level {level}")))?;
    let m = estimates.len();
    if m < 2 {
        return Err(Error::Domain(format!("need at least 2 estimates, got {m}")));
    }
    let mean = estimates.iter().sum::<f64>() / m as f64;
    let var = estimates.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
    let std = var.sqrt();
    let half = z * std / (m as f64).sqrt();
    Ok(ConfidenceInterval {
        mean,
        std,
        lo: mean - half,
        hi: mean + half,
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::pathsim::{simulate_fbm, FactorCache};

    fn fbm(h: f64, n: usize, seed: u64, cache: &FactorCache<f64>) -> Vec<f64> {
        let p = simulate_fbm::<f64>(&mut Rng::new(seed), h, n, 1.0, Some(cache)).unwrap();
        p.values.column(0).to_vec()
    }

    #[test]
    fn higuchi_recovers_hurst() {
        let cache = FactorCache::new();
        for h in [0.3, 0.7] {
            let mean = (0..50).map(|s| higuchi(&fbm(h, 1000, s, &cache), Some(20)).unwrap().value).sum::<f64>() / 50.0;
            assert!((mean - h).abs() < 0.1, "H={h}: {mean}");
        }
    }

    #[test]
    fn higuchi_on_trend_is_persistent() {
        let mut rng = Rng::new(4);
        let x: Vec<f64> = (0..300).map(|i| 1.0 - 0.001 * i as f64 + 0.002 * rng.normal()).collect();
        let h = higuchi(&x, None).unwrap().value;
        assert!(h > 0.5 && h < 1.0, "{h}");
    }

    #[test]
    fn rs_on_white_noise_and_fgn() {
        let mut rng = Rng::new(1);
        let noise: Vec<f64> = (0..4096).map(|_| rng.normal()).collect();
        let h = rescaled_range(&noise).unwrap().value;
        assert!(h > 0.45 && h < 0.65, "{h}");
        let cache = FactorCache::new();
        let mean = (0..50)
            .map(|s| rescaled_range(&increments(&fbm(0.8, 2049, s, &cache))).unwrap().value)
            .sum::<f64>()
            / 50.0;
        assert!((mean - 0.8).abs() < 0.12, "{mean}");
    }

    #[test]
    fn degenerate_inputs() {
        let flat = vec![2.0; 100];
        assert_eq!(higuchi(&flat, None).unwrap_err().kind(), "DegenerateSeries");
        let steps: Vec<f64> = (0..64).map(|i| i as f64 * 0.5).collect();
        assert_eq!(rescaled_range(&increments(&steps)).unwrap_err().kind(), "DegenerateSeries");
        assert_eq!(higuchi(&[1.0; 5], None).unwrap_err().kind(), "DomainError");
        assert_eq!(higuchi(&flat, Some(30)).unwrap_err().kind(), "DomainError");
        assert_eq!(rescaled_range(&[1.0; 16]).unwrap_err().kind(), "DomainError");
    }

    #[test]
    fn affine_invariance() {
        let mut rng = Rng::new(2);
        let x: Vec<f64> = (0..256).map(|_| rng.normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| -3.0 * v + 7.0).collect();
        let (a, b) = (higuchi(&x, None).unwrap().raw, higuchi(&y, None).unwrap().raw);
        assert!((a - b).abs() < 1e-10, "{a} {b}");
        let (a, b) = (rescaled_range(&x).unwrap().raw, rescaled_range(&y).unwrap().raw);
        assert!((a - b).abs() < 1e-10, "{a} {b}");
    }

    #[test]
    fn clamped_value_keeps_raw() {
        let e = HurstEstimate::from_raw(1.3);
        assert_eq!((e.value, e.raw), (1.0, 1.3));
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::default();
        assert_eq!(spec.starts(200).unwrap().len(), 11);
        assert_eq!(spec.starts(550).unwrap().len(), 46);
        let tiling = WindowSpec { window: 50, step: 50 };
        assert_eq!(tiling.starts(500).unwrap().len(), 10);
        for n in 100..400 {
            assert_eq!(spec.starts(n).unwrap().len(), (n - 100) / 10 + 1);
        }
        assert_eq!(spec.starts(99).unwrap_err().kind(), "LengthMismatch");
        assert_eq!(WindowSpec { window: 10, step: 11 }.starts(50).unwrap_err().kind(), "ConfigError");
    }

    #[test]
    fn windows_in_order() {
        let x: Vec<f64> = (0..130).map(|i| i as f64).collect();
        let out = sliding_window_estimates(&x, WindowSpec::default(), |w| Ok(w[0])).unwrap();
        assert_eq!(out, vec![(0, 0.0), (10, 10.0), (20, 20.0), (30, 30.0)]);
    }

    #[test]
    fn interval_examples() {
        let c = confidence_interval(&[0.3; 5], 0.95).unwrap();
        assert_eq!((c.lo, c.hi), (0.3, 0.3));
        let c = confidence_interval(&[0.0, 1.0], 0.95).unwrap();
        assert!((c.mean - 0.5).abs() < 1e-15);
        assert!(((c.hi - c.mean) - 1.959964 * 0.5_f64.sqrt() / 2.0_f64.sqrt()).abs() < 1e-12);
        let base = [0.1, 0.4, 0.2, 0.5];
        let rep: Vec<f64> = base.iter().cycle().take(16).cloned().collect();
        let w1 = confidence_interval(&base, 0.95).unwrap();
        let w4 = confidence_interval(&rep, 0.95).unwrap();
        let ratio = (w1.hi - w1.lo) / (w4.hi - w4.lo);
        // Same spread, four times the data: roughly half the width.
        assert!(ratio > 1.8 && ratio < 2.3, "{ratio}");
        assert!(confidence_interval(&[1.0], 0.95).is_err());
    }

    #[test]
    fn detrend_removes_lines() {
        let x: Vec<f64> = (0..50).map(|i| 2.0 + 0.5 * i as f64).collect();
        assert!(linear_detrend(&x).iter().all(|v| v.abs() < 1e-12));
        assert_eq!(increments(&[1.0, 4.0, 9.0]), vec![3.0, 5.0]);
    }
}
