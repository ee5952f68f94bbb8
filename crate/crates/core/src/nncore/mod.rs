//! Minimal differentiable tensor core for the segmentation network: each
//! op has an explicit forward and an analytic backward.

mod checkpoint;
mod gradcheck;
mod layers;
mod ops;
mod optim;
mod scalar;
mod tensor;

pub use checkpoint::{
    config_digest, decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint,
    Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION,
};
pub use gradcheck::{
    finite_diff_check, finite_diff_check_masked, relative_error, GradCheck, REL_FLOOR,
};
pub use layers::{
    conv2d, conv2d_backward, upconv2, upconv2_backward, LayerDesc, LayerGrads, LayerKind,
    LayerParams,
};
pub use ops::{
    concat_channels, maxpool2, maxpool2_backward, relu, relu_backward, softmax_channels,
    split_channels, weighted_cross_entropy, LossWeights, Pooled,
};
pub use optim::{adam_step, sgd_step, AdamHyper, AdamState, Optimizer, OptimizerKind};
pub use scalar::{gemm, gemm_strided, MatRef, Real};
pub use tensor::Tensor;
