//! Masked error metrics, SSIM, the OLS baseline and the ablation harness.

mod ablation;
mod metrics;
mod ols;

pub use ablation::{
    ablation_csv, ablation_grid, published_best_row, AblationFlags, AblationRow, UNetVariant, ABLATION_HEADER,
};
pub use metrics::{metrics, psnr, MetricAccumulator, MetricReport, SsimParams};
pub use ols::{ols_fit, r_squared, OlsAccumulator, OlsModel, OLS_RIDGE};
