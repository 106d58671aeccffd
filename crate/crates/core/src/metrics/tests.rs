use super::*;
use crate::imageio::PlanarImage;
use crate::model::BackboneConfig;

fn wave(h: usize, w: usize) -> PlanarImage {
    PlanarImage::from_fn(h, w, |c, y, x| {
        (0.5 + 0.4 * (0.3 * x as f64 + 0.2 * y as f64 + c as f64).sin()) as f32
    })
}

fn wave_noisy(h: usize, w: usize) -> PlanarImage {
    PlanarImage::from_fn(h, w, |c, y, x| {
        let base = 0.5 + 0.4 * (0.3 * x as f64 + 0.2 * y as f64 + c as f64).sin();
        (base + 0.15 * (0.05 * (x * y) as f64 + 2.0 * c as f64).cos()).clamp(0.0, 1.0) as f32
    })
}

#[test]
fn psnr_cases() {
    let a = wave(16, 16);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    let x = PlanarImage::filled(8, 8, 0.5);
    let y = PlanarImage::filled(8, 8, 0.4);
    assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-6);
    assert!(psnr(&x, &wave(8, 9)).is_err());
}

#[test]
fn psnr_matches_scripted_reference() {
    // numpy: 10·log10(1/mean((a−b)²)) on the same float32 images
    let got = psnr(&wave(24, 20), &wave_noisy(24, 20)).unwrap();
    assert!((got - 19.694_514_856_794_388).abs() < 1e-9, "{got}");
}

#[test]
fn ssim_cases() {
    let a = wave(24, 20);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let half = PlanarImage::filled(12, 12, 0.5);
    let inv = PlanarImage::from_fn(12, 12, |c, y, x| 1.0 - half.get(c, y, x));
    assert!((ssim(&half, &inv).unwrap() - 1.0).abs() < 1e-12);
    assert!(ssim(&wave(10, 30), &wave(10, 30)).is_err());
}

#[test]
fn ssim_matches_scripted_reference() {
    // scipy convolve2d('valid') with the normalized 11×11 σ=1.5 Gaussian
    let got = ssim(&wave(24, 20), &wave_noisy(24, 20)).unwrap();
    assert!((got - 0.769_699_768_865_085_1).abs() < 1e-6, "{got}");
}

#[test]
fn incremental_capacity_values() {
    assert_eq!(incremental_capacity(31.0, 31.0), 0.0);
    assert!((incremental_capacity(30.5, 30.0) - 0.462_117_157_26).abs() < 1e-11);
    assert!(incremental_capacity(29.0, 30.0) < 0.0);
    assert_eq!(
        incremental_capacity(29.0, 30.0),
        -incremental_capacity(30.0, 29.0)
    );
}

#[test]
fn edsr_body_macs() {
    let cfg = BackboneConfig::edsr(2);
    let row = mac_count(&cfg, 48, 48, cfg.num_exits());
    assert_eq!(row.body, 86_973_087_744);
    assert!(row.regressor * 10_000 <= row.body);
}

#[test]
fn cost_model_structure() {
    let cfg = BackboneConfig::tiny(2);
    assert_eq!(conv_macs(3, 16, 16, 16, 16), 589_824);
    let m = CostModel::new(&cfg, 16, 16);
    assert_eq!(m.rows.len(), cfg.num_exits() + 1);
    for w in m.rows.windows(2) {
        assert!(w[1].total() > w[0].total());
        assert_eq!(w[1].body - w[0].body, 2 * block_macs(&cfg, 16, 16));
    }
    assert!(CostModel::new(&cfg, 16, 20).deepest().total() > m.deepest().total());
    // ×2 tail: C→4C at h×w, then C→3 at 2h×2w
    assert_eq!(
        tail_macs(&cfg, 16, 16),
        conv_macs(3, 16, 64, 16, 16) + conv_macs(3, 16, 3, 32, 32)
    );
}
