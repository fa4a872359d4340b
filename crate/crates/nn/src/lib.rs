//! A small, deterministic CPU engine for the layers used by the speed
//! regressors: 3D/2D convolution, batch normalization, pooling, dense layers,
//! a GRU, and the Adam optimizer.
//!
//! There is no tape-based autodiff. Each layer caches what it needs during a
//! training-mode forward pass and exposes an explicit `backward` that
//! accumulates parameter gradients and returns the gradient with respect to
//! its input. Networks compose layers and call `backward` in reverse order.
//!
//! All kernels are single-threaded, so identical inputs and parameters give
//! bit-identical outputs.

mod act;
mod adam;
mod conv;
mod error;
mod gemm;
mod gru;
pub mod init;
mod linear;
mod norm;
mod param;
mod pool;
mod tensor;

pub use act::{relu_backward_inplace, relu_inplace};
pub use adam::{Adam, AdamConfig};
pub use conv::{Conv3d, ConvGeometry};
pub use error::{NnError, Result};
pub use gru::Gru;
pub use linear::Linear;
pub use norm::BatchNorm;
pub use param::{count_params, Param, ParamCounts, ParamKind, Parameterized};
pub use pool::{global_avg_pool, global_avg_pool_backward, max_pool2d};
pub use tensor::Tensor;
