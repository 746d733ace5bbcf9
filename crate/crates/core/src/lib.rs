//! Single-image super-resolution with dilated-convolution inception
//! modules, written from scratch on a small NCHW tensor type.
//!
//! The network predicts the high-frequency residual between a bicubic
//! upscale and the ground truth; [`pipeline`] adds it back. Training,
//! inference and evaluation are exposed both as library calls and through
//! the `mssrnet` binary (see [`cli`]).

pub mod cli;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use model::{Mssrnet, NetConfig};
pub use tensor::{Precision, Scalar, Tensor};

// The guide's snippets run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/dilated-convolution.md")]
    mod dilated_convolution {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/imaging.md")]
    mod imaging {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
