//! Forward operations and their exact reverse-mode gradients.
//!
//! There is no tape: each differentiable op has a matching `*_backward`
//! function and callers compose them by hand.

mod activation;
mod concat;
mod conv;
mod loss;
mod pool;
mod upsample;

pub use activation::{relu, relu_backward};
pub use concat::{concat_channels, split_channels};
pub use conv::{
    conv2d, conv2d_backward, effective_extent, ConvGrads, ConvParams, Padding,
};
pub(crate) use conv::conv2d_backward_select;
pub use loss::{softmax, softmax_cross_entropy, LossOutput};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool2d, maxpool2d_backward, MaxPoolOutput,
};
pub use upsample::{
    bilinear_resize, bilinear_resize_backward, bilinear_upsample, bilinear_upsample_backward,
};
