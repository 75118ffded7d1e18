//! SigMA and its variants: assembly, training, prediction and persistence.

mod config;
mod io;
mod model;
mod train;

pub use config::{ArchitectureConfig, TrainConfig, Variant};
pub use io::{InputShape, ModelFile, NamedParameter, MODEL_FORMAT_VERSION};
pub use model::{build_model, normalize_labels, param_count, scale_outputs, Model, TrainingMetadata};
pub use train::{normalized_rmse, train, train_with_progress, write_history, EpochRecord};
