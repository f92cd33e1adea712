//! Reverse-mode automatic differentiation on dense f64 tensors.
//!
//! The design is a flat tape of operations recorded during the forward pass.
//! Parameters live outside the tape in a [`ParamSet`] and are bound onto a tape
//! as leaves per forward pass; `backward` accumulates gradients in reverse
//! topological order and exports them back into the set by name.

mod fd;
mod layers;
mod params;
mod tape;
mod tensor;

pub use fd::{finite_difference_check, GradCheck};
pub use layers::{Act, LstmCell, Mlp};
pub use params::{load_checkpoint, save_checkpoint, GradMap, ParamSet};
pub use tape::{Binding, NodeId, Tape};
pub use tensor::Tensor;

/// Errors raised by tensor and tape operations.
#[derive(Debug, thiserror::Error)]
pub enum DiffnumError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("adam: learning rate must be positive, got {lr}")]
    BadLearningRate { lr: f64 },
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
