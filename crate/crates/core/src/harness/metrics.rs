use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::Scalar;

fn check<T: Scalar>(preds: &ArrayView2<T>, targets: &ArrayView2<T>) -> Result<()> {
    if preds.dim() != targets.dim() {
        return shape_err(format!("predictions {:?} vs targets {:?}", preds.dim(), targets.dim()));
    }
    if preds.nrows() == 0 || preds.ncols() == 0 {
        return shape_err("metrics need at least one sample and one parameter");
    }
    Ok(())
}

/// `(1/p)·sqrt((1/m)·Σ_i ‖x_i − y_i‖²)`.
pub fn average_rmse<T: Scalar>(preds: ArrayView2<T>, targets: ArrayView2<T>) -> Result<f64> {
    check(&preds, &targets)?;
    let (m, p) = preds.dim();
    let sse: f64 = preds
        .iter()
        .zip(targets.iter())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum();
    Ok((sse / m as f64).sqrt() / p as f64)
}

/// RMSE of each label column.
pub fn per_parameter_rmse<T: Scalar>(preds: ArrayView2<T>, targets: ArrayView2<T>) -> Result<Vec<f64>> {
    check(&preds, &targets)?;
    let m = preds.nrows() as f64;
    Ok(preds
        .columns()
        .into_iter()
        .zip(targets.columns())
        .map(|(a, b)| {
            let sse: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
            (sse / m).sqrt()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RseStats {
    pub max: f64,
    pub q75: f64,
    pub q25: f64,
}

/// Nearest-rank quantile of sorted data: the `ceil(q·m)`-th smallest value.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    let rank = ((q * m as f64).ceil() as usize).clamp(1, m);
    sorted[rank - 1]
}

/// Max and nearest-rank quartiles of the per-sample `(1/p)·‖x_i − y_i‖`.
pub fn average_rse_stats<T: Scalar>(preds: ArrayView2<T>, targets: ArrayView2<T>) -> Result<RseStats> {
    check(&preds, &targets)?;
    let p = preds.ncols() as f64;
    let mut rse: Vec<f64> = preds
        .rows()
        .into_iter()
        .zip(targets.rows())
        .map(|(a, b)| {
            let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
            sq.sqrt() / p
        })
        .collect();
    rse.sort_by(f64::total_cmp);
    Ok(RseStats {
        max: *rse.last().expect("non-empty"),
        q75: nearest_rank(&rse, 0.75),
        q25: nearest_rank(&rse, 0.25),
    })
}
