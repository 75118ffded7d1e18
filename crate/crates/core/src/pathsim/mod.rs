//! Exact and discretised simulators for fBm, fractional OU and rough Heston
//! paths, and labelled dataset assembly.

mod dataset;
mod process;

pub use dataset::{
    generate_dataset, read_dataset, write_dataset, DatasetManifest, DatasetSpec, LabeledDataset,
    SamplingRule,
};
pub use process::{
    fgn_covariance, simulate_fbm, simulate_fou, simulate_rheston, FactorCache, FouParams, Path,
    ProcessKind, RHestonParams,
};
