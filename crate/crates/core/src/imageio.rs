//! Planar RGB images in [0, 1] and PNG I/O.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// RGB image stored channel-planar (3 × height × width), values nominally
/// in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl PlanarImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != 3 * height * width {
            return Err(Error::shape(format!(
                "image {height}x{width} needs {} values, got {}",
                3 * height * width,
                data.len()
            )));
        }
        Ok(PlanarImage { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        PlanarImage {
            height,
            width,
            data: vec![value; 3 * height * width],
        }
    }

    /// Builds an image from `f(channel, y, x)`.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        PlanarImage { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return Err(Error::shape(format!(
                "crop {height}x{width}@({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(height, width, |c, y, x| {
            self.get(c, top + y, left + x)
        }))
    }

    /// Largest top-left crop whose sides are multiples of `m`.
    pub fn crop_to_multiple(&self, m: usize) -> Result<Self> {
        let (h, w) = (self.height / m * m, self.width / m * m);
        self.crop(0, 0, h, w)
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.height, self.width, |c, y, x| {
            self.get(c, y, self.width - 1 - x)
        })
    }

    pub fn flip_vertical(&self) -> Self {
        Self::from_fn(self.height, self.width, |c, y, x| {
            self.get(c, self.height - 1 - y, x)
        })
    }

    /// Rotation by 90° counter-clockwise.
    pub fn rotate90(&self) -> Self {
        Self::from_fn(self.width, self.height, |c, y, x| {
            self.get(c, x, self.width - 1 - y)
        })
    }

    pub fn clamped(&self) -> Self {
        PlanarImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Clamp to [0, 1] and round to the nearest of 256 levels.
    pub fn quantized(&self) -> Self {
        PlanarImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f32::from(to_u8(v)) / 255.0).collect(),
        }
    }

    /// `[1, 3, h, w]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[1, 3, self.height, self.width], self.data.clone()).expect("image extents are positive")
    }

    /// Image from a `[3, h, w]` or `[1, 3, h, w]` tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        let (h, w) = match s {
            [3, h, w] | [1, 3, h, w] => (*h, *w),
            _ => return Err(Error::shape(format!("not a single RGB image: {s:?}"))),
        };
        Self::new(h, w, t.data().to_vec())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let raw = img.as_raw();
        Ok(Self::from_fn(h, w, |c, y, x| {
            f32::from(raw[(y * w + x) * 3 + c]) / 255.0
        }))
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let (h, w) = (self.height, self.width);
        image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            image::Rgb([0, 1, 2].map(|c| to_u8(self.get(c, y, x))))
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Single-channel 8-bit PNG.
pub fn save_gray_png(path: impl AsRef<Path>, height: usize, width: usize, values: &[u8]) -> Result<()> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, values.to_vec())
        .ok_or_else(|| Error::shape("gray image buffer size mismatch"))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
