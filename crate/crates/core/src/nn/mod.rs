//! Neural-network primitives: convolution, pooling, channel fusion, the
//! BiReLU activation, MSE loss, and SGD. Every operation has an exact
//! backward pass; all are pure functions safe for concurrent use on
//! distinct tensors.

mod birelu;
mod conv;
mod fuse;
mod loss;
mod pool;
mod sgd;

pub use birelu::{birelu_backward, birelu_forward, BiReLU};
pub use conv::{conv2d_backward, conv2d_forward, Conv2DLayer, ConvGrads};
pub use fuse::{
    channel_group_max, channel_group_max_backward, channel_group_max_with_argmax,
    concat_channels, split_channels, GroupArgmax,
};
pub use loss::mse_loss;
pub use pool::{maxpool_spatial_backward, maxpool_spatial_forward, PoolArgmax};
pub use sgd::{sgd_update, sgd_update_slice, SGDConfig};
