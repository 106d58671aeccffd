use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use super::resample::bicubic_downsample;
use crate::error::{Error, Result};
use crate::imageio::PlanarImage;
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// HR images of a corpus directory and their cached LR counterparts.
#[derive(Debug, Clone)]
pub struct DatasetIndex {
    pub entries: Vec<(PathBuf, PathBuf)>,
    pub split: Split,
    pub scale: usize,
}

/// Sibling cache directory for LR images at `scale`.
pub fn lr_cache_dir(corpus: &Path, scale: usize) -> PathBuf {
    let name = corpus
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    corpus.with_file_name(format!("{name}_lr_x{scale}"))
}

impl DatasetIndex {
    /// Every `*.png` under `corpus`, sorted by file name.
    pub fn scan(corpus: &Path, scale: usize, split: Split) -> Result<Self> {
        if !corpus.is_dir() {
            return Err(Error::Data(format!(
                "corpus {} is not a directory",
                corpus.display()
            )));
        }
        let cache = lr_cache_dir(corpus, scale);
        let mut hr: Vec<PathBuf> = fs::read_dir(corpus)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        hr.sort();
        if hr.is_empty() {
            return Err(Error::Data(format!("no PNG images in {}", corpus.display())));
        }
        let entries = hr
            .into_iter()
            .map(|p| {
                let lr = cache.join(p.file_name().expect("file path"));
                (p, lr)
            })
            .collect();
        Ok(DatasetIndex {
            entries,
            split,
            scale,
        })
    }

    /// Loads every pair, creating missing LR cache files.
    pub fn load(&self) -> Result<Corpus> {
        let mut pairs = Vec::with_capacity(self.entries.len());
        for (hr_path, lr_path) in &self.entries {
            let hr = PlanarImage::load_png(hr_path)?.crop_to_multiple(self.scale)?;
            let lr = if lr_path.exists() {
                PlanarImage::load_png(lr_path)?
            } else {
                let lr = bicubic_downsample(&hr, self.scale)?.quantized();
                write_atomically(&lr, lr_path)?;
                lr
            };
            if lr.height() * self.scale != hr.height() || lr.width() * self.scale != hr.width() {
                return Err(Error::Data(format!(
                    "cached LR {} does not match its HR at ×{}",
                    lr_path.display(),
                    self.scale
                )));
            }
            pairs.push(ImagePair {
                name: hr_path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                hr,
                lr,
            });
        }
        Ok(Corpus {
            pairs,
            scale: self.scale,
        })
    }
}

/// Writes through a uniquely named sibling and renames it into place, so
/// concurrent readers never see a partial file.
fn write_atomically(img: &PlanarImage, path: &Path) -> Result<()> {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}.png",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    img.save_png(&tmp)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ImagePair {
    pub name: String,
    pub hr: PlanarImage,
    pub lr: PlanarImage,
}

/// In-memory paired corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub pairs: Vec<ImagePair>,
    pub scale: usize,
}

impl Corpus {
    pub fn open(dir: &Path, scale: usize, split: Split) -> Result<Self> {
        DatasetIndex::scan(dir, scale, split)?.load()
    }

    /// Builds pairs from HR images held in memory (no cache).
    pub fn from_hr_images(images: Vec<(String, PlanarImage)>, scale: usize) -> Result<Self> {
        let pairs = images
            .into_iter()
            .map(|(name, img)| {
                let hr = img.crop_to_multiple(scale)?;
                let lr = bicubic_downsample(&hr, scale)?.quantized();
                Ok(ImagePair { name, hr, lr })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus { pairs, scale })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// The three independent coin flips of one augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Augmentation {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: bool,
}

impl Augmentation {
    pub fn draw(rng: &mut impl Rng) -> Self {
        Augmentation {
            hflip: rng.gen_bool(0.5),
            vflip: rng.gen_bool(0.5),
            rot90: rng.gen_bool(0.5),
        }
    }

    pub fn apply(&self, img: &PlanarImage) -> PlanarImage {
        let mut out = img.clone();
        if self.hflip {
            out = out.flip_horizontal();
        }
        if self.vflip {
            out = out.flip_vertical();
        }
        if self.rot90 {
            out = out.rotate90();
        }
        out
    }
}

/// Same random flips/rotation applied to an HR/LR patch pair.
pub fn augment(hr: &PlanarImage, lr: &PlanarImage, rng: &mut impl Rng) -> (PlanarImage, PlanarImage) {
    let a = Augmentation::draw(rng);
    (a.apply(hr), a.apply(lr))
}

/// A batch of aligned random crops: LR `[B,3,p,p]`, HR `[B,3,s·p,s·p]`.
pub fn sample_batch(
    corpus: &Corpus,
    batch_size: usize,
    hr_patch: usize,
    with_augment: bool,
    rng: &mut impl Rng,
) -> Result<(Tensor, Tensor)> {
    if corpus.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let s = corpus.scale;
    if !hr_patch.is_multiple_of(s) {
        return Err(Error::config(format!(
            "hr_patch {hr_patch} is not divisible by scale {s}"
        )));
    }
    let lp = hr_patch / s;
    let mut lrs = Vec::with_capacity(batch_size);
    let mut hrs = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let pair = &corpus.pairs[rng.gen_range(0..corpus.len())];
        if pair.lr.height() < lp || pair.lr.width() < lp {
            return Err(Error::Data(format!(
                "image {} is smaller than the {hr_patch}px training patch",
                pair.name
            )));
        }
        let top = rng.gen_range(0..=pair.lr.height() - lp);
        let left = rng.gen_range(0..=pair.lr.width() - lp);
        let lr = pair.lr.crop(top, left, lp, lp)?;
        let hr = pair.hr.crop(top * s, left * s, hr_patch, hr_patch)?;
        let (hr, lr) = if with_augment {
            augment(&hr, &lr, rng)
        } else {
            (hr, lr)
        };
        lrs.push(lr.to_tensor().batch_item(0)?);
        hrs.push(hr.to_tensor().batch_item(0)?);
    }
    Ok((Tensor::stack(&lrs)?, Tensor::stack(&hrs)?))
}
