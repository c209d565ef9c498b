//! Dense tensors, tape-based reverse-mode differentiation, AdamW and a
//! portable PRNG.

mod graph;
mod optim;
mod params;
mod rng;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use optim::{adamw_update, AdamW, AdamWConfig};
pub use params::{Binder, GradStore, Param, ParamId, ParamStore};
pub use rng::{mix_seed, splitmix64, Pcg32, DEFAULT_STREAM};
pub use tensor::{Real, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called on a graph that was built without a tape")]
    NoTape,
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
}
