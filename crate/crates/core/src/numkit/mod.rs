//! Minimal dense tensor library with reverse-mode automatic differentiation.
//!
//! [`Tensor`] is a plain row-major `f64` array. [`Graph`] records operations
//! on [`Var`] handles and replays them backwards; every differentiable op
//! stores what its backward pass needs and nothing else. Model code is written
//! once against the [`Backend`] trait and runs either on a recording graph
//! (training, gradient checks) or directly on tensors (inference).
//!
//! Broadcasting is deliberately narrow: elementwise ops accept equal shapes or
//! a single-element operand. Row-bias addition and the joiner's outer sum
//! are separate, explicitly named ops.

mod backend;
mod gradcheck;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use backend::{Backend, Eval, Record};
pub use gradcheck::{finite_diff_check, finite_diff_check_params};
pub use graph::{Graph, NodeId, Var};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
pub(crate) use tensor::sinusoidal_positions;
