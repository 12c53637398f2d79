//! Dense numerics: tensors, reverse-mode differentiation (including
//! gradients of gradients), small networks, losses and optimizers.

pub mod autodiff;
pub mod loss;
pub mod net;
pub mod optim;
pub mod tensor;

pub use autodiff::{grad, IndexMap, Var};
pub use loss::{cross_entropy, mean_squared_error, value_and_grad, GradientSet, Loss};
pub use net::{forward, Architecture, Layer, NetworkParams};
pub use optim::{OptState, Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::Tensor;
