//! Slim-neck building blocks for convolutional detectors: GSConv, the GS
//! bottleneck, VoV-GSCSP, SPP/SPPF, SE/CBAM/CA attention, the IoU loss family
//! with analytic gradients, a static cost model and a small graph executor.

pub mod activation;
pub mod bench;
pub mod blocks;
pub mod check;
pub mod cost;
pub mod error;
pub mod graph;
pub mod loss;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
