//! Dense feed-forward network engine.
//!
//! Activations are `batch x features`; layer weights are `out_dim x in_dim`
//! and biases `out_dim x 1`. Everything is `f64`.

mod gradcheck;
mod matrix;
mod network;
mod optim;
mod params;

pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use matrix::{argmax, Matrix};
pub use network::{backward, forward, predict, softmax, ForwardTrace, Mode};
pub use optim::{clip_global_norm, sgd_step, LrSchedule, Sgd, SgdConfig};
pub use params::{
    global_norm, init_params, mlp_spec, validate_spec, Activation, DenseLayer, GradientSet,
    LayerSpec, ModelParams,
};
