use crate::error::{Error, Result};
use crate::imageio::PlanarImage;

/// PSNR reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub n_pixels: usize,
}

fn same_shape(a: &PlanarImage, b: &PlanarImage) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::shape(format!(
            "images differ in size: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// PSNR in dB for unit peak over two equally long value slices, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr_values(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sse: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// PSNR over all RGB values.
pub fn psnr(a: &PlanarImage, b: &PlanarImage) -> Result<f64> {
    same_shape(a, b)?;
    Ok(psnr_values(a.data(), b.data()))
}

/// Normalized 1-d Gaussian taps; the 2-d window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of a plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * plane[y * w + x + i])
                .sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * wo + x])
                .sum();
        }
    }
    (out, ho, wo)
}

fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize, taps: &[f64]) -> f64 {
    let a: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let b: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (mu_a, ..) = filter_valid(&a, h, w, taps);
    let (mu_b, ..) = filter_valid(&b, h, w, taps);
    let (aa, ..) = filter_valid(&prod(&a, &a), h, w, taps);
    let (bb, ..) = filter_valid(&prod(&b, &b), h, w, taps);
    let (ab, ..) = filter_valid(&prod(&a, &b), h, w, taps);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean SSIM (11×11 Gaussian window, σ = 1.5, dynamic range 1) over the
/// valid window positions of each channel, averaged over RGB.
pub fn ssim(a: &PlanarImage, b: &PlanarImage) -> Result<f64> {
    same_shape(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "SSIM needs both sides ≥ {SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let s: f64 = (0..3)
        .map(|c| ssim_plane(a.channel(c), b.channel(c), h, w, &taps))
        .sum();
    Ok(s / 3.0)
}

pub fn quality(a: &PlanarImage, b: &PlanarImage) -> Result<QualityReport> {
    Ok(QualityReport {
        psnr_db: psnr(a, b)?,
        ssim: ssim(a, b)?,
        n_pixels: a.height() * a.width(),
    })
}

/// `tanh(p_curr − p_prev)`: the gain of the latest blocks, squashed to (−1, 1).
pub fn incremental_capacity(p_curr: f64, p_prev: f64) -> f64 {
    (p_curr - p_prev).tanh()
}
