use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use super::config::ArchitectureConfig;
use super::model::{build_model, Model, TrainingMetadata};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputShape {
    pub n: usize,
    pub d: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedParameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// On-disk JSON layout of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub architecture: ArchitectureConfig,
    pub input: InputShape,
    pub label_names: Vec<String>,
    pub training: Option<TrainingMetadata>,
    pub parameters: Vec<NamedParameter>,
}

impl<T: Scalar> Model<T> {
    pub fn to_file(&self) -> ModelFile {
        let params = self.network.params();
        let parameters = params
            .infos()
            .iter()
            .enumerate()
            .map(|(id, info)| NamedParameter {
                name: info.name.clone(),
                shape: info.shape.clone(),
                values: params.get(id).iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            architecture: self.arch.clone(),
            input: InputShape { n: self.n, d: self.d },
            label_names: self.label_names.clone(),
            training: self.metadata.clone(),
            parameters,
        }
    }

    /// Rebuilds the network from the architecture and copies the stored values in.
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        let mut model: Model<T> = build_model(&file.architecture, file.input.n, file.input.d, &mut Rng::new(0))?;
        model.set_label_names(file.label_names.clone())?;
        model.metadata = file.training.clone();
        let store = model.network.params_mut();
        if file.parameters.len() != store.infos().len() {
            return Err(Error::Parse(format!(
                "model file has {} tensors, architecture has {}",
                file.parameters.len(),
                store.infos().len()
            )));
        }
        for p in &file.parameters {
            let id = store
                .find(&p.name)
                .ok_or_else(|| Error::Parse(format!("unknown parameter '{}'", p.name)))?;
            if store.info(id).shape != p.shape || p.values.len() != store.info(id).len {
                return Err(Error::Parse(format!("parameter '{}' has the wrong shape", p.name)));
            }
            for (dst, &v) in store.get_mut(id).iter_mut().zip(&p.values) {
                *dst = T::of(v);
            }
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
