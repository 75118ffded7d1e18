use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::params::{ParamStore, ParamTensor};
use super::stage::{Cache, Stage};
use crate::error::{shape_err, Error, Result};
use crate::Scalar;

/// Samples per gradient accumulation group. Groups are summed in index
/// order, so the reduction does not depend on the thread count.
const GROUP: usize = 4;

/// Activations recorded by [`Network::forward`] for the reverse pass.
pub struct Tape<T> {
    caches: Vec<Vec<Cache<T>>>,
    outputs: Array2<T>,
}

impl<T> Tape<T> {
    pub fn outputs(&self) -> &Array2<T> {
        &self.outputs
    }
}

/// A pipeline of stages over a flat parameter vector.
pub struct Network<T> {
    stages: Vec<Stage>,
    params: ParamStore<T>,
    grads: Vec<T>,
    tape: Option<Tape<T>>,
}

impl<T: Scalar> Clone for Network<T> {
    fn clone(&self) -> Self {
        Self {
            stages: self.stages.clone(),
            params: self.params.clone(),
            grads: self.grads.clone(),
            tape: None,
        }
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(stages: Vec<Stage>, params: ParamStore<T>) -> Self {
        let grads = vec![T::zero(); params.count()];
        Self {
            stages,
            params,
            grads,
            tape: None,
        }
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        self.tape = None;
        &mut self.params
    }

    pub fn gradients(&self) -> &[T] {
        &self.grads
    }

    /// Parameters and gradients split into (values, grads) for an optimizer.
    pub fn values_and_gradients(&mut self) -> (&mut [T], &[T]) {
        self.tape = None;
        (self.params.values_mut(), &self.grads)
    }

    pub fn tensors(&self) -> Vec<ParamTensor<'_, T>> {
        self.params.tensors(&self.grads)
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    fn run(&self, x: ArrayView2<T>) -> Result<(Array2<T>, Vec<Cache<T>>)> {
        let mut h = x.to_owned();
        let mut caches = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let (y, c) = stage.forward(&self.params, h, x)?;
            h = y;
            caches.push(c);
        }
        if h.nrows() != 1 {
            return shape_err(format!("network must end in a single row, got {}", h.nrows()));
        }
        Ok((h, caches))
    }

    fn stack(rows: Vec<Array2<T>>) -> Array2<T> {
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths")
    }

    /// Outputs for every sample, one row each. Does not touch the tape.
    pub fn infer(&self, batch: &[ArrayView2<T>]) -> Result<Array2<T>> {
        if batch.is_empty() {
            return shape_err("empty batch");
        }
        let rows = batch
            .par_iter()
            .map(|x| self.run(x.view()).map(|(y, _)| y))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::stack(rows))
    }

    /// Forward pass that records the activations needed by [`Self::backward`].
    pub fn forward(&mut self, batch: &[ArrayView2<T>]) -> Result<Array2<T>> {
        if batch.is_empty() {
            return shape_err("empty batch");
        }
        self.tape = None;
        let results = batch
            .par_iter()
            .map(|x| self.run(x.view()))
            .collect::<Result<Vec<_>>>()?;
        let (rows, caches): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let outputs = Self::stack(rows);
        self.tape = Some(Tape {
            caches,
            outputs: outputs.clone(),
        });
        Ok(outputs)
    }

    pub fn tape(&self) -> Option<&Tape<T>> {
        self.tape.as_ref()
    }

    fn backward_sample(&self, caches: &[Cache<T>], g: Array2<T>, grads: &mut [T]) -> Result<()> {
        let mut g = g;
        for (stage, cache) in self.stages.iter().zip(caches).rev() {
            g = stage.backward(&self.params, cache, g, grads)?;
        }
        Ok(())
    }

    /// Replaces the stored gradients with those of `Σ grad_outputs ⊙ outputs`
    /// for the last recorded forward pass, then clears the tape.
    pub fn backward(&mut self, grad_outputs: ArrayView2<T>) -> Result<()> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::Graph("backward called without a recorded forward pass".into()))?;
        if grad_outputs.dim() != tape.outputs.dim() {
            return shape_err(format!(
                "output gradient {:?} vs outputs {:?}",
                grad_outputs.dim(),
                tape.outputs.dim()
            ));
        }
        let count = self.params.count();
        let groups: Vec<Vec<T>> = tape
            .caches
            .par_chunks(GROUP)
            .enumerate()
            .map(|(gi, chunk)| {
                let mut acc = vec![T::zero(); count];
                for (k, caches) in chunk.iter().enumerate() {
                    let row = grad_outputs.row(gi * GROUP + k).to_owned().insert_axis(ndarray::Axis(0));
                    self.backward_sample(caches, row, &mut acc)?;
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        self.grads.iter_mut().for_each(|g| *g = T::zero());
        for acc in groups {
            for (g, a) in self.grads.iter_mut().zip(acc) {
                *g += a;
            }
        }
        Ok(())
    }

    /// RMSE of the recorded outputs against `targets`; fills the gradients
    /// of that loss and returns its value.
    pub fn backward_rmse(&mut self, targets: ArrayView2<T>) -> Result<T> {
        let outputs = match &self.tape {
            Some(t) => t.outputs.clone(),
            None => return Err(Error::Graph("backward called without a recorded forward pass".into())),
        };
        let loss = super::ops::rmse_loss(outputs.view(), targets)?;
        let denom = T::of_usize(outputs.len()) * loss;
        let grad = if denom > T::zero() {
            (&outputs - &targets) / denom
        } else {
            Array2::zeros(outputs.dim())
        };
        self.backward(grad.view())?;
        Ok(loss)
    }
}
