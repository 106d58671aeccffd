//! Independent reference implementations and fixtures shared by the
//! integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ape::imageio::PlanarImage;
use ape::model::{BackboneConfig, MultiExitSr, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// The bundled gallery images, in file-name order.
pub fn gallery() -> Vec<(String, PlanarImage)> {
    let dir = data_dir().join("gallery");
    let mut names: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, PlanarImage::load_png(&p).unwrap())
        })
        .collect()
}

/// Tiny ×2 model whose regressor has random weights, so signals differ
/// between patches without any training.
pub fn signal_model(seed: u64) -> MultiExitSr {
    let mut m = MultiExitSr::build(BackboneConfig::tiny(2), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let c = m.config().channels;
    m.regressor
        .weight
        .set_data((0..c).map(|_| rng.gen_range(-4.0..4.0)).collect())
        .unwrap();
    m.regressor.bias.set_data(vec![0.1]).unwrap();
    m.stage = Stage::Joint;
    m
}

/// 10·log10(1/MSE) over the raw values, capped at 100 dB.
pub fn oracle_psnr(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut se = 0.0f64;
    for i in 0..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        se += d * d;
    }
    let mse = se / a.len() as f64;
    if mse == 0.0 {
        100.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(100.0)
    }
}

/// SSIM with a full 2-d 11×11 Gaussian window (σ 1.5), evaluated directly
/// at every valid window position and averaged over channels.
#[allow(clippy::needless_range_loop)]
pub fn oracle_ssim(a: &PlanarImage, b: &PlanarImage) -> f64 {
    const N: usize = 11;
    let g: Vec<f64> = (0..N)
        .map(|i| {
            let d = i as f64 - 5.0;
            (-d * d / (2.0 * 1.5 * 1.5)).exp()
        })
        .collect();
    let mut w = [[0.0f64; N]; N];
    let mut total = 0.0;
    for i in 0..N {
        for j in 0..N {
            w[i][j] = g[i] * g[j];
            total += w[i][j];
        }
    }
    let (c1, c2) = ((0.01f64).powi(2), (0.03f64).powi(2));
    let (h, wd) = (a.height(), a.width());
    let mut per_channel = 0.0;
    for c in 0..3 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for y in 0..=h - N {
            for x in 0..=wd - N {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..N {
                    for j in 0..N {
                        let k = w[i][j] / total;
                        let p = a.get(c, y + i, x + j) as f64;
                        let q = b.get(c, y + i, x + j) as f64;
                        ma += k * p;
                        mb += k * q;
                        saa += k * p * p;
                        sbb += k * q * q;
                        sab += k * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc +=
                    ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                n += 1;
            }
        }
        per_channel += acc / n as f64;
    }
    per_channel / 3.0
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .fold(0.0, f64::max)
}
