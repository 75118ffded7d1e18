//! Truncated signatures of piecewise-linear paths.
//!
//! Level `i` of a signature over `d` channels is a `d^i` tensor stored flat
//! in row-major lexicographic multi-index order: component `(c_1, ..., c_i)`
//! sits at `c_1·d^(i-1) + ... + c_i`. Levels are concatenated from level 1
//! upwards; the constant level 0 term is implicit and never stored.

mod lift;
mod tensor;

pub use lift::{
    lift, lifted_signature_backward, lifted_signature_forward, lifted_signature_matrix,
    path_signature, prefix_ends, time_augment, LiftedSignatureMatrix, SignatureTrace,
};
pub use tensor::{chen_product, level_spans, segment_signature, sig_dim, TruncatedSignature};
