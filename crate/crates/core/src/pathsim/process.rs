use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, log_gamma, Rng};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Fbm,
    Fou,
    Rheston,
}

impl ProcessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessKind::Fbm => "fbm",
            ProcessKind::Fou => "fou",
            ProcessKind::Rheston => "rheston",
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbm" => Ok(ProcessKind::Fbm),
            "fou" => Ok(ProcessKind::Fou),
            "rheston" => Ok(ProcessKind::Rheston),
            other => Err(Error::Parse(format!("unknown process '{other}'"))),
        }
    }
}

/// One sampled realisation on a uniform grid over `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path<T> {
    pub times: Array1<T>,
    /// `n × d` samples.
    pub values: Array2<T>,
    pub process: ProcessKind,
    /// Set once a time channel has been prepended to `values`.
    pub time_augmented: bool,
}

impl<T: Scalar> Path<T> {
    pub fn new(horizon: T, values: Array2<T>, process: ProcessKind) -> Self {
        let n = values.nrows();
        assert!(n >= 2, "a path needs at least two samples");
        let dt = horizon / T::of_usize(n - 1);
        let mut times = Array1::from_shape_fn(n, |i| T::of_usize(i) * dt);
        times[n - 1] = horizon;
        Self {
            times,
            values,
            process,
            time_augmented: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn horizon(&self) -> T {
        self.times[self.times.len() - 1]
    }

    /// Copy with the normalised time channel prepended.
    pub fn time_augment(&self) -> Result<Path<T>> {
        if self.time_augmented {
            return Err(Error::ShapeMismatch(
                "path already carries a time channel".into(),
            ));
        }
        Ok(Path {
            times: self.times.clone(),
            values: crate::signature::time_augment(self.values.view())?,
            process: self.process,
            time_augmented: true,
        })
    }
}

fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Hurst parameter must lie in (0, 1), got {h}")))
    }
}

/// Covariance of `n - 1` consecutive fractional Gaussian noise increments
/// on a grid of spacing `dt`.
pub fn fgn_covariance<T: Scalar>(hurst: T, n: usize, dt: T) -> Result<Array2<T>> {
    let h = hurst.as_f64();
    check_hurst(h)?;
    if n < 2 {
        return Err(Error::Domain(format!("need n >= 2 grid points, got {n}")));
    }
    let m = n - 1;
    let two_h = 2.0 * h;
    let scale = 0.5 * dt.as_f64().powf(two_h);
    let acov: Vec<T> = (0..m)
        .map(|k| {
            let k = k as f64;
            let lag_minus = (k - 1.0).abs().powf(two_h);
            T::of(scale * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + lag_minus))
        })
        .collect();
    Ok(Array2::from_shape_fn((m, m), |(i, j)| acov[i.abs_diff(j)]))
}

type FactorKey = (u64, usize, u64);

/// Cholesky factors of fGn covariances shared across paths with the same
/// `(H, n, dt)`.
pub struct FactorCache<T> {
    factors: RwLock<HashMap<FactorKey, Arc<Array2<T>>>>,
}

impl<T: Scalar> Default for FactorCache<T> {
    fn default() -> Self {
        Self {
            factors: RwLock::new(HashMap::new()),
        }
    }
}

impl<T: Scalar> FactorCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.factors.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn factor(&self, hurst: T, n: usize, dt: T) -> Result<Arc<Array2<T>>> {
        let key = (hurst.as_f64().to_bits(), n, dt.as_f64().to_bits());
        if let Some(f) = self.factors.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(f));
        }
        let l = Arc::new(cholesky(&fgn_covariance(hurst, n, dt)?)?);
        self.factors
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| Arc::clone(&l));
        Ok(l)
    }
}

/// `n - 1` correlated increments `L · z`.
fn fgn_increments<T: Scalar>(rng: &mut Rng, factor: &Array2<T>) -> Vec<T> {
    let m = factor.nrows();
    let z: Vec<T> = (0..m).map(|_| T::of(rng.normal())).collect();
    (0..m)
        .map(|i| {
            let row = factor.row(i);
            let mut s = T::zero();
            for k in 0..=i {
                s += row[k] * z[k];
            }
            s
        })
        .collect()
}

fn check_grid<T: Scalar>(n: usize, horizon: T) -> Result<T> {
    if n < 2 {
        return Err(Error::Domain(format!("need n >= 2 grid points, got {n}")));
    }
    if !(horizon.as_f64() > 0.0) {
        return Err(Error::Domain("time horizon must be positive".into()));
    }
    Ok(horizon / T::of_usize(n - 1))
}

/// Fractional Brownian motion started at 0, simulated exactly through the
/// Cholesky factor of the increment covariance.
pub fn simulate_fbm<T: Scalar>(
    rng: &mut Rng,
    hurst: T,
    n: usize,
    horizon: T,
    cache: Option<&FactorCache<T>>,
) -> Result<Path<T>> {
    check_hurst(hurst.as_f64())?;
    let dt = check_grid(n, horizon)?;
    let factor = match cache {
        Some(c) => c.factor(hurst, n, dt)?,
        None => Arc::new(cholesky(&fgn_covariance(hurst, n, dt)?)?),
    };
    let inc = fgn_increments(rng, &factor);
    let mut values = Array2::zeros((n, 1));
    let mut acc = T::zero();
    for (i, dx) in inc.into_iter().enumerate() {
        acc += dx;
        values[[i + 1, 0]] = acc;
    }
    Ok(Path::new(horizon, values, ProcessKind::Fbm))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FouParams {
    pub alpha: f64,
    pub mu: f64,
    pub sigma: f64,
    pub x0: f64,
}

impl Default for FouParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            mu: 0.15,
            sigma: 0.2,
            x0: 0.01,
        }
    }
}

/// Euler–Maruyama scheme for `dX = -α (X - μ) dt + σ dB^H`, driven by exact
/// fBm increments.
pub fn simulate_fou<T: Scalar>(
    rng: &mut Rng,
    hurst: T,
    n: usize,
    horizon: T,
    params: FouParams,
    cache: Option<&FactorCache<T>>,
) -> Result<Path<T>> {
    if params.alpha < 0.0 || params.sigma < 0.0 {
        return Err(Error::Domain("fOU needs alpha >= 0 and sigma >= 0".into()));
    }
    let driver = simulate_fbm(rng, hurst, n, horizon, cache)?;
    let dt = horizon / T::of_usize(n - 1);
    let (alpha, mu, sigma) = (T::of(params.alpha), T::of(params.mu), T::of(params.sigma));
    let mut values = Array2::zeros((n, 1));
    let mut x = T::of(params.x0);
    values[[0, 0]] = x;
    for i in 1..n {
        let db = driver.values[[i, 0]] - driver.values[[i - 1, 0]];
        x = x - alpha * (x - mu) * dt + sigma * db;
        values[[i, 0]] = x;
    }
    Ok(Path::new(horizon, values, ProcessKind::Fou))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RHestonParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub theta: f64,
    pub x0: f64,
}

impl Default for RHestonParams {
    fn default() -> Self {
        Self {
            kappa1: 0.1,
            kappa2: 0.03,
            theta: 0.3,
            x0: 0.01,
        }
    }
}

/// Rough Heston variance by a left-point Volterra–Euler sum with the
/// fractional kernel `t^(H-1/2) / Γ(H+1/2)`; the square root uses the
/// positive part and every value is clipped at zero.
pub fn simulate_rheston<T: Scalar>(
    rng: &mut Rng,
    hurst: T,
    n: usize,
    horizon: T,
    params: RHestonParams,
) -> Result<Path<T>> {
    let h = hurst.as_f64();
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::Domain(format!(
            "rough Heston needs H in (0, 1/2), got {h}"
        )));
    }
    if params.kappa1 < 0.0 || params.kappa2 < 0.0 || params.theta < 0.0 || params.x0 < 0.0 {
        return Err(Error::Domain(
            "rough Heston needs non-negative kappa1, kappa2, theta and x0".into(),
        ));
    }
    let dt = check_grid(n, horizon)?.as_f64();
    let inv_gamma = (-log_gamma(h + 0.5)?).exp();
    // kernel[l] = K_H(l·dt), l >= 1
    let kernel: Vec<f64> = (0..n)
        .map(|l| if l == 0 { 0.0 } else { (l as f64 * dt).powf(h - 0.5) * inv_gamma })
        .collect();
    let sqrt_dt = dt.sqrt();
    let mut xs = vec![0.0f64; n];
    let mut forcing = vec![0.0f64; n];
    xs[0] = params.x0;
    for i in 1..n {
        let prev = xs[i - 1];
        let db = sqrt_dt * rng.normal();
        forcing[i - 1] = params.kappa1 * (params.theta - prev) * dt + params.kappa2 * prev.max(0.0).sqrt() * db;
        let mut acc = params.x0;
        for j in 0..i {
            acc += kernel[i - j] * forcing[j];
        }
        xs[i] = acc.max(0.0);
    }
    let values = Array2::from_shape_fn((n, 1), |(i, _)| T::of(xs[i]));
    Ok(Path::new(T::of(horizon.as_f64()), values, ProcessKind::Rheston))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_increments_are_white() {
        let c = fgn_covariance(0.5f64, 6, 1.0).unwrap();
        assert_eq!(c, Array2::<f64>::eye(5));
    }

    #[test]
    fn lag_one_autocovariance() {
        let c = fgn_covariance(0.7f64, 4, 1.0).unwrap();
        let expected = 0.5 * (2f64.powf(1.4) - 2.0);
        assert!((c[[0, 1]] - expected).abs() < 1e-15);
        assert!((c[[0, 1]] - 0.31951).abs() < 1e-5);
    }

    #[test]
    fn covariance_is_symmetric() {
        for &h in &[0.1f64, 0.35, 0.8] {
            let c = fgn_covariance(h, 30, 0.01).unwrap();
            assert_eq!(c, c.t());
        }
    }

    #[test]
    fn invalid_hurst() {
        assert!(matches!(fgn_covariance(1.0f64, 5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(fgn_covariance(0.0f64, 5, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn factorisable_across_hurst_grid() {
        for k in 1..20 {
            let h = 0.05 * k as f64;
            let c = fgn_covariance(h, 300, 1.0 / 299.0).unwrap();
            assert!(cholesky(&c).is_ok(), "H = {h}");
        }
    }

    #[test]
    fn high_hurst_factor_has_positive_diagonal() {
        let c = fgn_covariance(0.99f64, 50, 1.0).unwrap();
        let l = cholesky(&c).unwrap();
        assert!(l.diag().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn fbm_starts_at_zero() {
        for seed in 0..5 {
            let p = simulate_fbm(&mut Rng::new(seed), 0.3f64, 50, 1.0, None).unwrap();
            assert_eq!(p.values[[0, 0]], 0.0);
            assert_eq!(p.times[0], 0.0);
            assert_eq!(p.times[49], 1.0);
        }
    }

    #[test]
    fn cache_reuses_factor() {
        let cache = FactorCache::new();
        let a = simulate_fbm(&mut Rng::new(1), 0.7f64, 40, 1.0, Some(&cache)).unwrap();
        let b = simulate_fbm(&mut Rng::new(1), 0.7f64, 40, 1.0, Some(&cache)).unwrap();
        let c = simulate_fbm(&mut Rng::new(1), 0.7f64, 40, 1.0, None).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn fou_fixed_point() {
        let params = FouParams { alpha: 0.5, mu: 0.15, sigma: 0.0, x0: 0.15 };
        let p = simulate_fou(&mut Rng::new(4), 0.7f64, 100, 1.0, params, None).unwrap();
        assert!(p.values.iter().all(|&x| (x - 0.15).abs() < 1e-15));
    }

    #[test]
    fn fou_without_drift_is_scaled_fbm() {
        let params = FouParams { alpha: 0.0, mu: 0.15, sigma: 0.2, x0: 0.01 };
        let p = simulate_fou(&mut Rng::new(9), 0.6f64, 64, 1.0, params, None).unwrap();
        let b = simulate_fbm(&mut Rng::new(9), 0.6f64, 64, 1.0, None).unwrap();
        for i in 0..64 {
            assert!((p.values[[i, 0]] - (0.01 + 0.2 * b.values[[i, 0]])).abs() < 1e-12);
        }
    }

    #[test]
    fn rheston_without_forcing_is_constant() {
        let params = RHestonParams { kappa1: 0.0, kappa2: 0.0, theta: 0.3, x0: 0.05 };
        let p = simulate_rheston(&mut Rng::new(2), 0.1f64, 80, 1.0, params).unwrap();
        assert!(p.values.iter().all(|&x| x == 0.05));
    }

    #[test]
    fn rheston_deterministic_drift_is_monotone() {
        let params = RHestonParams { kappa1: 2.0, kappa2: 0.0, theta: 0.3, x0: 0.01 };
        let p = simulate_rheston(&mut Rng::new(2), 0.2f64, 200, 1.0, params).unwrap();
        for i in 1..200 {
            assert!(p.values[[i, 0]] >= p.values[[i - 1, 0]] - 1e-15);
        }
        assert!(p.values[[199, 0]] <= 0.3 + 1e-12);
    }

    #[test]
    fn rheston_reference_setting_is_nonnegative() {
        for seed in 0..20 {
            let p = simulate_rheston(&mut Rng::new(seed), 0.1f64, 500, 1.0, RHestonParams::default()).unwrap();
            assert!(p.values.iter().all(|&x| x.is_finite() && x >= 0.0));
        }
    }

    #[test]
    fn rheston_rejects_smooth_regime() {
        let r = simulate_rheston(&mut Rng::new(0), 0.5f64, 10, 1.0, RHestonParams::default());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn double_time_augmentation_rejected() {
        let p = simulate_fbm(&mut Rng::new(0), 0.4f64, 10, 1.0, None).unwrap();
        let a = p.time_augment().unwrap();
        assert_eq!(a.channels(), 2);
        assert!(a.time_augment().is_err());
    }
}
