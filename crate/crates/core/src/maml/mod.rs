//! Inner-loop adaptation, first-order meta-gradients, meta-training and
//! encoder pre-training.

mod inner;
mod pretrain;
mod train;

pub(crate) use inner::inner_step;
pub use inner::{
    fo_meta_grad, inner_loop, select_permutation_min_support_loss, unicorn_meta_grad,
    InnerLoopConfig, MetaGrad,
};
pub use pretrain::{pretrain_classifier, pretrain_encoder, PretrainConfig, Pretrained};
pub use train::{meta_train, task_meta_grad, write_train_log, EpochLog, TrainConfig, Variant};
