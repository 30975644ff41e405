//! Dense N-dimensional tensors and a tape-based reverse-mode autodiff engine
//! with the convolution, pooling, resampling, normalisation and attention
//! kernels needed by encoder-decoder segmentation networks.

mod element;
mod error;
mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use element::{matmul_into, Element};
pub use error::{Result, TensorError};
pub use gradcheck::{gradient_check, gradient_check_many};
pub use ops::{attention, attention_weights, concat, BatchStats, ConvOptions};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
