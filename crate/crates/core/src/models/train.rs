use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path as FsPath;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::{normalize_labels, Model, TrainingMetadata};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{adam_step, AdamState, Rng};
use crate::nn::rmse_loss;
use crate::pathsim::LabeledDataset;
use crate::Scalar;

/// Losses after one epoch, on range-normalised labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// RMSE over all mini-batches of the epoch, each measured before its update.
    pub train_rmse: f64,
    pub val_rmse: Option<f64>,
}

fn views<T>(data: &LabeledDataset<T>) -> Vec<ArrayView2<'_, T>> {
    data.paths.iter().map(|p| p.values.view()).collect()
}

fn check_dataset<T: Scalar>(model: &Model<T>, data: &LabeledDataset<T>, what: &str) -> Result<()> {
    if data.is_empty() {
        return shape_err(format!("{what} set is empty"));
    }
    if data.label_dim() != model.arch.outputs() {
        return shape_err(format!(
            "{what} set has {} labels, model has {} outputs",
            data.label_dim(),
            model.arch.outputs()
        ));
    }
    model.check_inputs(&views(data))
}

/// RMSE of the model on `data` with labels normalised to (0,1).
pub fn normalized_rmse<T: Scalar>(model: &Model<T>, data: &LabeledDataset<T>) -> Result<f64> {
    check_dataset(model, data, "evaluation")?;
    let out = model.predict_normalized(&views(data))?;
    let target = normalize_labels(data.labels.view(), &model.arch.ranges)?;
    Ok(rmse_loss(out.view(), target.view())?.as_f64())
}

/// Mini-batch Adam on the RMSE of normalised labels. Returns one record per
/// epoch; the run is a pure function of the model, data and `cfg.seed`.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train_set: &LabeledDataset<T>,
    val_set: Option<&LabeledDataset<T>>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    train_with_progress(model, train_set, val_set, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress<T: Scalar>(
    model: &mut Model<T>,
    train_set: &LabeledDataset<T>,
    val_set: Option<&LabeledDataset<T>>,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    check_dataset(model, train_set, "training")?;
    if let Some(v) = val_set {
        check_dataset(model, v, "validation")?;
    }
    let inputs = views(train_set);
    let targets = normalize_labels(train_set.labels.view(), &model.arch.ranges)?;
    let p = targets.ncols();
    let mut state = AdamState::new(model.param_count(), cfg.adam());
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut sse = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| inputs[i].view()).collect();
            let target: Array2<T> = targets.select(Axis(0), chunk);
            let net = &mut model.network;
            net.forward(&batch)?;
            let loss = net.backward_rmse(target.view())?.as_f64();
            if !loss.is_finite() || net.gradients().iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            sse += loss * loss * (chunk.len() * p) as f64;
            let (values, grads) = net.values_and_gradients();
            adam_step(values, grads, &mut state)?;
        }
        let train_rmse = (sse / (inputs.len() * p) as f64).sqrt();
        let val_rmse = match val_set {
            Some(v) => Some(normalized_rmse(model, v)?),
            None => None,
        };
        if val_rmse.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let rec = EpochRecord {
            epoch,
            train_rmse,
            val_rmse,
        };
        progress(&rec);
        history.push(rec);
    }
    let last = history.last().expect("epochs >= 1");
    model.metadata = Some(TrainingMetadata {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: cfg.seed,
        train_size: train_set.len(),
        final_train_rmse: last.train_rmse,
        final_val_rmse: last.val_rmse,
    });
    Ok(history)
}

/// Writes `epoch,train_rmse,val_rmse`; a missing validation loss is an empty field.
pub fn write_history(history: &[EpochRecord], path: &FsPath) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,train_rmse,val_rmse")?;
    for r in history {
        let val = r.val_rmse.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", r.epoch, r.train_rmse, val)?;
    }
    w.flush()?;
    Ok(())
}
