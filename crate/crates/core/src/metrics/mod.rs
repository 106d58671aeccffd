//! Reconstruction quality, incremental capacity and the analytic
//! multiply-accumulate cost model.

mod cost;
mod quality;

pub use cost::{block_macs, conv_macs, head_macs, mac_count, regressor_macs, tail_macs, CostModel, CostRow};
pub use quality::{
    gaussian_taps, incremental_capacity, psnr, psnr_values, quality, ssim, QualityReport, PSNR_CAP_DB,
    SSIM_SIGMA, SSIM_WINDOW,
};

#[cfg(test)]
mod tests;
