//! Knowledge-distilled implicit diffusion models for estimating carbon stock
//! density from multispectral rasters.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense tensors, a reverse-mode tape, a counter-based RNG and
//!   first-order optimizers.
//! - [`preprocess`]: carbon stock from survey volumes, canopy-weighted density
//!   rasters, forest masks, tiling and normalisation.
//! - [`kd`]: feature spectra, mCEV channel selection, global eigenbases and
//!   blockwise PCA distillation.
//! - [`networks`]: VGG-style extractors, the condition pyramid, cross-attention
//!   fusion, the implicit MLP upsampler and the conditional UNet.
//! - [`diffusion`]: noise schedules, forward corruption, the L1 noise objective,
//!   training and reverse sampling.
//! - [`evalkit`]: MAE/MSE/RMSE/PSNR/SSIM, an OLS baseline and the ablation grid.

pub mod diffusion;
pub mod error;
pub mod evalkit;
pub mod kd;
pub mod networks;
pub mod numerics;
pub mod preprocess;

pub use error::{Error, Result};
