//! Minimal differentiable-computation layer: tensors, named parameters, a
//! reverse-mode graph, finite-difference checking and checkpoints.

mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod param;
mod tensor;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, CheckpointHeader, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use error::SubstrateError;
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use graph::{Graph, Var};
pub use param::{Gradients, LstmWeights, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
