//! Shared numerical kernels: random streams, dense factorisation, special
//! functions and the Adam optimizer.

mod adam;
mod linalg;
mod rng;
mod special;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use linalg::{cholesky, frobenius_norm, lower_times_upper};
pub use rng::{standard_normal_matrix, Rng};
pub use special::log_gamma;
