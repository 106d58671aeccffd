//! Overlapped patch split and weighted merge.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::imageio::PlanarImage;

/// Placement of square patches over an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub image_size: (usize, usize),
    pub patch_size: usize,
    pub stride: usize,
    /// Row-major (top, left) positions in LR pixels.
    pub coords: Vec<(usize, usize)>,
    /// SR factor the merged output is enlarged by.
    pub scale: usize,
}

/// Overlap weighting used when merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Every covering patch counts once; overlaps are plain averages.
    #[default]
    Uniform,
    /// Separable raised-cosine taper, strictly positive at the borders.
    RaisedCosine,
}

/// Start offsets `0, s, 2s, …` with the last one clamped flush to the edge.
pub fn axis_positions(size: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut pos = 0;
    loop {
        if pos + patch >= size {
            v.push(size - patch);
            break;
        }
        v.push(pos);
        pos += stride;
    }
    v.dedup();
    v
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch_size: usize, stride: usize, scale: usize) -> Result<Self> {
        if patch_size == 0 || patch_size > height.min(width) {
            return Err(Error::shape(format!(
                "patch size {patch_size} does not fit a {height}x{width} image"
            )));
        }
        if stride == 0 || stride > patch_size {
            return Err(Error::config(format!(
                "stride must lie in 1..={patch_size}, got {stride}"
            )));
        }
        if scale == 0 {
            return Err(Error::config("scale must be positive"));
        }
        let ys = axis_positions(height, patch_size, stride);
        let xs = axis_positions(width, patch_size, stride);
        let coords = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (y, x))).collect();
        Ok(PatchGrid {
            image_size: (height, width),
            patch_size,
            stride,
            coords,
            scale,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Side of an output patch.
    pub fn output_patch_size(&self) -> usize {
        self.patch_size * self.scale
    }

    pub fn output_size(&self) -> (usize, usize) {
        (self.image_size.0 * self.scale, self.image_size.1 * self.scale)
    }

    /// Cuts the patches of `image` (which must match `image_size`).
    pub fn extract(&self, image: &PlanarImage) -> Result<Vec<PlanarImage>> {
        if (image.height(), image.width()) != self.image_size {
            return Err(Error::shape("image does not match the grid"));
        }
        self.coords
            .iter()
            .map(|&(t, l)| image.crop(t, l, self.patch_size, self.patch_size))
            .collect()
    }

    /// Same placement expressed in the enlarged image.
    pub fn scaled(&self) -> PatchGrid {
        let s = self.scale;
        PatchGrid {
            image_size: (self.image_size.0 * s, self.image_size.1 * s),
            patch_size: self.patch_size * s,
            stride: self.stride * s,
            coords: self.coords.iter().map(|&(t, l)| (t * s, l * s)).collect(),
            scale: 1,
        }
    }
}

/// Splits `image` into `p × p` patches at stride `s`.
pub fn split(image: &PlanarImage, p: usize, s: usize) -> Result<(PatchGrid, Vec<PlanarImage>)> {
    split_for_scale(image, p, s, 1)
}

/// As [`split`], recording the SR factor the patches will be merged at.
pub fn split_for_scale(
    image: &PlanarImage,
    p: usize,
    s: usize,
    scale: usize,
) -> Result<(PatchGrid, Vec<PlanarImage>)> {
    let grid = PatchGrid::new(image.height(), image.width(), p, s, scale)?;
    let patches = grid.extract(image)?;
    Ok((grid, patches))
}

fn window(n: usize, weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Uniform => vec![1.0; n],
        Weighting::RaisedCosine => (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / n as f64).cos())
            .collect(),
    }
}

/// Merges SR patches (one per grid coordinate, in grid order) into the
/// enlarged image by uniform overlap averaging.
pub fn merge(grid: &PatchGrid, sr_patches: &[PlanarImage], scale: usize) -> Result<PlanarImage> {
    merge_with(grid, sr_patches, scale, Weighting::Uniform)
}

pub fn merge_with(
    grid: &PatchGrid,
    sr_patches: &[PlanarImage],
    scale: usize,
    weighting: Weighting,
) -> Result<PlanarImage> {
    if sr_patches.len() != grid.len() {
        return Err(Error::shape(format!(
            "merge: {} patches for {} grid positions",
            sr_patches.len(),
            grid.len()
        )));
    }
    let ps = grid.patch_size * scale;
    let (oh, ow) = (grid.image_size.0 * scale, grid.image_size.1 * scale);
    let win = window(ps, weighting);
    let mut acc = vec![0.0f64; 3 * oh * ow];
    let mut weight = vec![0.0f64; oh * ow];
    for (patch, &(t, l)) in sr_patches.iter().zip(&grid.coords) {
        if (patch.height(), patch.width()) != (ps, ps) {
            return Err(Error::shape(format!(
                "merge: patch is {}x{}, expected {ps}x{ps}",
                patch.height(),
                patch.width()
            )));
        }
        let (t, l) = (t * scale, l * scale);
        for y in 0..ps {
            for x in 0..ps {
                let wgt = win[y] * win[x];
                let o = (t + y) * ow + l + x;
                weight[o] += wgt;
                for c in 0..3 {
                    acc[c * oh * ow + o] += wgt * f64::from(patch.get(c, y, x));
                }
            }
        }
    }
    let n = oh * ow;
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, &v)| (v / weight[i % n]) as f32)
        .collect();
    PlanarImage::new(oh, ow, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> PlanarImage {
        PlanarImage::from_fn(h, w, |c, y, x| ((c * 31 + y * 7 + x * 3) % 97) as f32 / 96.0)
    }

    #[test]
    fn axis_positions_examples() {
        assert_eq!(axis_positions(100, 48, 46), vec![0, 46, 52]);
        assert_eq!(axis_positions(48, 48, 46), vec![0]);
        assert_eq!(axis_positions(96, 48, 48), vec![0, 48]);
    }

    #[test]
    fn split_examples() {
        let (g, p) = split(&ramp(100, 100), 48, 46).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(p.len(), 9);
        assert_eq!(g.coords[2], (0, 52));
        let (g, _) = split(&ramp(48, 48), 48, 46).unwrap();
        assert_eq!(g.coords, vec![(0, 0)]);
        let (g, _) = split(&ramp(96, 96), 48, 48).unwrap();
        assert_eq!(g.coords, vec![(0, 0), (0, 48), (48, 0), (48, 48)]);
        assert!(split(&ramp(40, 60), 48, 46).is_err());
        assert!(split(&ramp(60, 60), 48, 49).is_err());
    }

    #[test]
    fn identity_round_trip_is_exact() {
        let img = ramp(70, 53);
        let (g, p) = split(&img, 16, 11).unwrap();
        assert_eq!(merge(&g, &p, 1).unwrap(), img);
    }

    #[test]
    fn overlap_is_averaged() {
        let grid = PatchGrid {
            image_size: (4, 6),
            patch_size: 4,
            stride: 2,
            coords: vec![(0, 0), (0, 2)],
            scale: 1,
        };
        let out = merge(
            &grid,
            &[PlanarImage::filled(4, 4, 0.2), PlanarImage::filled(4, 4, 0.6)],
            1,
        )
        .unwrap();
        assert_eq!(out.get(0, 1, 0), 0.2);
        assert!((out.get(1, 2, 3) - 0.4).abs() < 1e-7);
        assert_eq!(out.get(2, 3, 5), 0.6);
    }

    #[test]
    fn hr_grid_round_trip() {
        let hr = ramp(64, 80);
        let (lr_grid, _) = split_for_scale(&ramp(32, 40), 12, 10, 2).unwrap();
        let hr_patches = lr_grid.scaled().extract(&hr).unwrap();
        assert_eq!(merge(&lr_grid, &hr_patches, 2).unwrap(), hr);
    }

    #[test]
    fn raised_cosine_preserves_constants_approximately() {
        let img = PlanarImage::filled(30, 30, 0.3);
        let (g, p) = split(&img, 12, 7).unwrap();
        let out = merge_with(&g, &p, 1, Weighting::RaisedCosine).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let (g, mut p) = split(&ramp(20, 20), 8, 6).unwrap();
        p.pop();
        assert!(merge(&g, &p, 1).is_err());
        let (g, p) = split(&ramp(20, 20), 8, 6).unwrap();
        assert!(merge(&g, &p, 2).is_err());
    }
}
