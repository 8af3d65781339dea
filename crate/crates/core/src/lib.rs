//! Multiple-channel optimal transport for image hiding.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`pnm`], [`rng`]: dense `C×H×W` tensors, binary PGM/PPM I/O and a
//!   portable seeded generator.
//! * [`ot`]: discrete optimal transport between two point clouds on the line
//!   (sorted matching, an assignment solver, a brute-force oracle and a
//!   log-domain entropic solver) plus the binary key format.
//! * [`mcot`]: per-channel transport of a latent matrix onto Gaussian noise and
//!   the small MLP surrogate of each channel's map.
//! * [`nn`]: a desk-scale hide/reveal U-Net with manual backpropagation,
//!   training, gradient checking and checkpoints.
//! * [`metrics`]: PSNR (luma), SSIM, MAE, RMSE and gray histograms.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the tools and tests use.

pub mod error;
pub mod mcot;
pub mod metrics;
pub mod nn;
pub mod ot;
pub mod pnm;
pub mod rng;
pub mod scalar;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use scalar::Scalar;

/// `C×H×W` image or feature tensor in double precision.
pub type ImageTensor = tensor::Tensor<f64>;
/// Single-precision image tensor.
pub type ImageTensorF32 = tensor::Tensor<f32>;
/// `C×N` latent matrix in double precision.
pub type LatentMatrix = tensor::LatentMatrix<f64>;
pub type DiscreteDistribution = ot::DiscreteDistribution<f64>;
pub type CostMatrix = ot::CostMatrix<f64>;
pub type TransportPlan = ot::TransportPlan<f64>;
pub type McotResult = mcot::McotResult<f64>;
pub type MlpTransport = mcot::MlpTransport<f64>;
pub type StegoModel = nn::StegoModel<f64>;
pub use metrics::MetricsReport;
