//! Small deterministic dense-tensor engine: a closed set of ops, each with a
//! hand-written backward, recorded on a [`Graph`].

pub mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod param;
mod tensor;

pub use graph::{Graph, Var};
pub use param::{Param, ParamId, ParamStore, Sgd};
pub use tensor::Tensor;
