//! Deterministic numerical core: tensors, layers with hand-written adjoints,
//! Adam with global-norm clipping, and a finite-difference gradient checker.

pub mod checkpoint;
pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod params;
pub mod real;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use ops::{
    affinity, cbow_mean, gru_step, l2_normalize, mlp_forward, Gru, Linear, Mlp, NORM_EPS,
};
pub use optim::{adam_step, clip_gradients, AdamState};
pub use params::{
    HyperParams, ModelParams, ModelShape, ParamBlocks, UserTower, Weights, EVENT_TYPES,
    EVENT_TYPE_DIM,
};
pub use real::Real;
pub use tensor::Tensor;
