//! A small differentiable-compute kernel: tensors, a recorded tape with the
//! operators the classifier needs, Adam, and finite-difference checking.

mod gradcheck;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use graph::{
    causal_dilated_conv1d, cross_scale_loss, embed_lookup, global_max_pool, infonce_pair_loss,
    infonce_pair_loss_raw_ratio, linear, relu, softmax_cross_entropy, Graph, Var,
};
pub use kernels::ConvSpec;
pub use params::{
    adam_step, check_compatible, checkpoint_from_json, checkpoint_to_json, load_checkpoint,
    AdamConfig, Param, ParamStore,
};
pub use tensor::Tensor;
