//! Small differentiable networks: tensors, a reverse-mode tape, Adam, Polyak
//! averaging and parameter snapshots.

mod adam;
mod arch;
mod graph;
mod params;
mod snapshot;
mod tensor;

pub use adam::Adam;
pub use arch::{action_batch, image_batch, mlp, proprio_batch, Architecture, ConvSpec, LOG_STD_MAX, LOG_STD_MIN};
pub use graph::{Gradients, Graph, Var};
pub use params::{Bound, ParamSet};
pub use snapshot::{checksum, WeightSnapshot};
pub use tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite gradient in {name}[{index}]: {value}")]
    NonFiniteGradient { name: String, index: usize, value: f64 },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("configuration error: {0}")]
    Config(String),
}
