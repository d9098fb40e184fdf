//! Single-image dehazing with a small K-estimation network trained from
//! scratch under pixel and structural-similarity losses.
//!
//! The crate is organized by pipeline stage:
//!
//! * [`image`]: buffers, PNG/PNM I/O, Gaussian filtering, windowed statistics
//! * [`haze`]: the atmospheric scattering model and its K reparameterization
//! * [`network`]: the five-layer convolutional K estimator, forward and backward
//! * [`losses`]: ℓ2, ℓ1, SSIM, MS-SSIM and MS-SSIM mixes with analytic gradients
//! * [`metrics`]: PSNR and evaluation SSIM over datasets
//! * [`dataset`]: synthetic hazy/clean pair generation and manifests
//! * [`gradcheck`]: finite-difference checks of loss and network gradients
//! * [`trainer`]: momentum SGD with weight decay and gradient clipping
//! * [`config`] and [`cli`]: run configuration and the `hazenet` command line

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod haze;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod trainer;

pub use error::{Error, Result};
pub use image::{Image, Plane};
