//! Laboratory for single-hidden-layer auto-encoders with tied weights.
//!
//! The crate trains one architecture (encoder `h = act(W x + b_e)`, decoder
//! `y = W^T h + b_d`) under interchangeable regularized objectives: explicit
//! input corruption, its closed-form second-order marginalization, a
//! contraction penalty on the encoder Jacobian, a KL penalty on mean
//! activations, corruption applied at the loss level, and two generic
//! penalty families over activation derivatives and mean activations. All
//! gradients are hand-derived and cross-checked against finite differences.
//!
//! What the library is actually for is measuring how these objectives drive
//! hidden units toward saturation: every training run records per-unit
//! activation fractions, dead units, and pre-activation statistics, and the
//! [`verify`] module certifies the bias-gradient bound, the bias-descent
//! mechanism, and the one-sided sparsity bound numerically on every build.
//!
//! [`sweep`] and the `aelab` binary run grids of (objective, activation,
//! corruption level) cells with paired seeds and tabulate the results.

pub mod activations;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod regularizers;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
