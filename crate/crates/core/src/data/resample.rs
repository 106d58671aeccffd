//! Separable cubic-convolution resampling (a = −0.5) with the kernel
//! widened by the reduction factor, so downscaling is antialiased.

use crate::error::{Error, Result};
use crate::imageio::PlanarImage;

const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel, support (−2, 2).
pub fn cubic_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * CUBIC_A
    } else {
        0.0
    }
}

/// Mirror an out-of-range index about the edge samples (`-1 → 1`).
fn reflect(j: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = j.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Normalized (source index, weight) taps for every output position.
pub(crate) fn axis_taps(in_size: usize, out_size: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = in_size as f64 / out_size as f64;
    let filter_scale = scale.max(1.0);
    let support = 2.0 * filter_scale;
    (0..out_size)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            let lo = (center - support - 1.0).floor() as isize;
            let hi = (center + support + 1.0).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .filter_map(|j| {
                    let w = cubic_kernel((j as f64 + 0.5 - center) / filter_scale);
                    (w != 0.0).then(|| (reflect(j, in_size), w))
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Resizes to `out_h × out_w` (horizontal pass, then vertical). Output is
/// clamped to [0, 1].
pub fn bicubic_resize(img: &PlanarImage, out_h: usize, out_w: usize) -> Result<PlanarImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::shape("resize to an empty image"));
    }
    let (h, w) = (img.height(), img.width());
    let xt = axis_taps(w, out_w);
    let yt = axis_taps(h, out_h);
    let mut out = Vec::with_capacity(3 * out_h * out_w);
    let mut rows = vec![0.0f64; h * out_w];
    for c in 0..3 {
        let plane = img.channel(c);
        for y in 0..h {
            for (x, taps) in xt.iter().enumerate() {
                rows[y * out_w + x] = taps.iter().map(|&(j, wt)| wt * f64::from(plane[y * w + j])).sum();
            }
        }
        for taps in &yt {
            for x in 0..out_w {
                let v: f64 = taps.iter().map(|&(j, wt)| wt * rows[j * out_w + x]).sum();
                out.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    PlanarImage::new(out_h, out_w, out)
}

/// Antialiased bicubic reduction by an integer factor.
pub fn bicubic_downsample(img: &PlanarImage, scale: usize) -> Result<PlanarImage> {
    if scale == 0 || !img.height().is_multiple_of(scale) || !img.width().is_multiple_of(scale) {
        return Err(Error::shape(format!(
            "{}x{} is not divisible by scale {scale}",
            img.height(),
            img.width()
        )));
    }
    bicubic_resize(img, img.height() / scale, img.width() / scale)
}

/// Plain bicubic enlargement, the interpolation baseline.
pub fn bicubic_upsample(img: &PlanarImage, scale: usize) -> Result<PlanarImage> {
    bicubic_resize(img, img.height() * scale, img.width() * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_shape() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        assert!((cubic_kernel(0.5) - 0.5625).abs() < 1e-12);
        assert!((cubic_kernel(1.5) + 0.0625).abs() < 1e-12);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(3, 5), 3);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn constant_and_checkerboard() {
        let c = PlanarImage::filled(12, 18, 0.37);
        for s in [2, 3] {
            let d = bicubic_downsample(&c, s).unwrap();
            assert!(d.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
        }
        let board = PlanarImage::from_fn(16, 12, |_, y, x| ((x + y) % 2) as f32);
        let d = bicubic_downsample(&board, 2).unwrap();
        assert!(d.data().iter().all(|&v| (v - 0.5).abs() < 1e-6), "{:?}", d.data());
    }

    #[test]
    fn rejects_non_divisible() {
        assert!(bicubic_downsample(&PlanarImage::filled(10, 9, 0.0), 2).is_err());
    }

    #[test]
    fn interior_matches_pillow() {
        // PIL Image.resize(BICUBIC) in float mode on the same 16×12 plane;
        // rows 2..=5, columns 2..=3 use no boundary samples.
        let expect = [
            [0.2127501, 0.1568147],
            [0.089084, 0.424021],
            [0.3336977, 0.3534369],
            [0.0473081, 0.1847835],
        ];
        let img = PlanarImage::from_fn(16, 12, |_, y, x| {
            let (x, y) = (x as f64, y as f64);
            let v = ((0.7 * x + 1.3 * y).sin() * 0.5 + 0.5) * (((x * y) as usize % 5) as f64 + 1.0) / 5.0;
            v as f32
        });
        let d = bicubic_downsample(&img, 2).unwrap();
        for (r, row) in expect.iter().enumerate() {
            for (k, &e) in row.iter().enumerate() {
                let got = d.get(0, r + 2, k + 2);
                assert!((f64::from(got) - e).abs() < 1e-5, "({r},{k}) {got} vs {e}");
            }
        }
    }
}
