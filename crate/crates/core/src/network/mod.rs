//! The few-shot classifier `argmax_c w_c . f(x)`: an MLP encoder with linear
//! heads, its gradients, the outer optimizer and checkpoints.

mod checkpoint;
mod gradcheck;
mod model;
mod optimizer;
mod params;

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::grad_check;
pub use model::{
    accuracy, batch_loss, batch_loss_and_grad, cross_entropy, features, forward_logits, predict,
    softmax,
};
pub use optimizer::{OptimizerConfig, OuterOptimizer};
pub use params::{Encoder, GradSet, Group, HeadMode, Heads, Layer, ParamSet};
