use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::Scalar;

/// Location of one named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Borrowed view of a named tensor and its gradient.
#[derive(Debug)]
pub struct ParamTensor<'a, T> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub values: &'a [T],
    pub gradient: &'a [T],
}

/// All parameters of a network, stored back to back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    infos: Vec<ParamInfo>,
    values: Vec<T>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            infos: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Registers a zero-filled tensor and returns its index.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<usize> {
        let name = name.into();
        if self.infos.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("duplicate parameter name '{name}'")));
        }
        let len = shape.iter().product();
        self.infos.push(ParamInfo {
            name,
            shape: shape.to_vec(),
            offset: self.values.len(),
            len,
        });
        self.values.resize(self.values.len() + len, T::zero());
        Ok(self.infos.len() - 1)
    }

    /// Fills tensor `id` with draws from uniform(-bound, bound).
    pub fn init_uniform(&mut self, id: usize, bound: f64, rng: &mut Rng) {
        let info = &self.infos[id];
        for v in &mut self.values[info.offset..info.offset + info.len] {
            *v = T::of(rng.uniform_range(-bound, bound));
        }
    }

    pub fn infos(&self) -> &[ParamInfo] {
        &self.infos
    }

    pub fn info(&self, id: usize) -> &ParamInfo {
        &self.infos[id]
    }

    pub fn get(&self, id: usize) -> &[T] {
        let info = &self.infos[id];
        &self.values[info.offset..info.offset + info.len]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut [T] {
        let info = &self.infos[id];
        &mut self.values[info.offset..info.offset + info.len]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.infos.iter().position(|p| p.name == name)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Pairs every tensor with the matching slice of `gradient`.
    pub fn tensors<'a>(&'a self, gradient: &'a [T]) -> Vec<ParamTensor<'a, T>> {
        assert_eq!(gradient.len(), self.values.len());
        self.infos
            .iter()
            .map(|p| ParamTensor {
                name: &p.name,
                shape: &p.shape,
                values: &self.values[p.offset..p.offset + p.len],
                gradient: &gradient[p.offset..p.offset + p.len],
            })
            .collect()
    }
}
