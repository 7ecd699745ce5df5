//! Numerical core: dense linear algebra, stacked LSTM with BPTT, losses,
//! Adam, per-layer gradient clipping and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod clip;
pub mod loss;
pub mod lstm;
pub mod matrix;

use thiserror::Error;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use clip::{clip_gradients, layer_norms, DEFAULT_CLIP_THRESHOLD};
pub use loss::{clamped_ln, clamped_ln_one_minus, label_time_loss, PROB_EPS};
pub use lstm::{Activation, Backward, DenseParams, GradientSet, LstmLayerParams, LstmStack, Tape};
pub use matrix::{softmax, Matrix};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
