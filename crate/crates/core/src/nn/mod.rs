//! Differentiable layers with hand-written reverse passes.
//!
//! Every activation is a row-major matrix; vectors are `1 × k` rows. A
//! [`Network`] is a straight pipeline of [`Stage`]s reading one flat
//! parameter vector.

mod gradcheck;
mod network;
mod ops;
mod params;
mod stage;

pub use gradcheck::{finite_difference_check, GradCheckReport, GRADIENT_FLOOR};
pub use network::{Network, Tape};
pub use ops::{
    attention_forward, conv1d_forward, conv1d_output_len, mlp_forward, multihead_forward,
    rmse_loss, sigmoid_head, softmax_rows, Activation, DenseLayer,
};
pub use params::{ParamInfo, ParamStore, ParamTensor};
pub use stage::{HeadSpec, LiftRule, Stage};
