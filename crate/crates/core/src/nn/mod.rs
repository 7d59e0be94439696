//! Small reverse-mode autodiff engine and layers for the task models.
pub mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod tensor;

pub use graph::{sigmoid, Grads, Graph, Var};
pub use layers::{Bound, Init, ParamStore};
pub use optim::Optimizer;
pub(crate) use optim::OptState;
pub use tensor::Tensor;
