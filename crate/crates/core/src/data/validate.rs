use super::corpus::Corpus;
use super::resample::bicubic_upsample;
use super::train::compute_ic_targets;
use crate::error::{Error, Result};
use crate::imageio::PlanarImage;
use crate::metrics::psnr;
use crate::model::MultiExitSr;
use crate::numerics::Tensor;
use crate::patchwork::PatchGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    /// Mean PSNR of the deepest exit on whole images (8-bit quantized).
    pub deepest_psnr: f64,
    /// Mean PSNR of bicubic enlargement of the LR input.
    pub bicubic_psnr: f64,
    /// Regressor MSE against per-patch targets over all exits.
    pub regressor_mse: f64,
    /// MSE an all-zero predictor would score on the same targets.
    pub zero_predictor_mse: f64,
    pub n_patches: usize,
}

/// Evaluates reconstruction on whole validation images and the regressor
/// on non-overlapping `patch`-sized LR patches.
pub fn validate(model: &MultiExitSr, corpus: &Corpus, patch: usize) -> Result<ValidationReport> {
    if corpus.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    let scale = corpus.scale;
    let (mut deep, mut bic) = (0.0, 0.0);
    let (mut se, mut se0, mut count) = (0.0, 0.0, 0usize);
    let mut n_patches = 0;
    for pair in &corpus.pairs {
        let sr = PlanarImage::from_tensor(&model.forward_full(&pair.lr.to_tensor())?.detach())?;
        deep += psnr(&sr.quantized(), &pair.hr)?;
        bic += psnr(&bicubic_upsample(&pair.lr, scale)?.quantized(), &pair.hr)?;

        let grid = PatchGrid::new(pair.lr.height(), pair.lr.width(), patch, patch, scale)?;
        let lr_p: Vec<Tensor> = grid
            .extract(&pair.lr)?
            .iter()
            .map(|p| p.to_tensor().batch_item(0))
            .collect::<Result<_>>()?;
        let hr_p: Vec<Tensor> = grid
            .scaled()
            .extract(&pair.hr)?
            .iter()
            .map(|p| p.to_tensor().batch_item(0))
            .collect::<Result<_>>()?;
        let (lr_b, hr_b) = (Tensor::stack(&lr_p)?, Tensor::stack(&hr_p)?);
        let targets = compute_ic_targets(model, &lr_b, &hr_b)?;
        let outs = model.forward_all_exits(&lr_b)?;
        for (j, signal) in outs.signals.iter().enumerate() {
            for (pred, &t) in signal.data().iter().zip(&targets.targets[j]) {
                let d = f64::from(*pred) - t;
                se += d * d;
                se0 += t * t;
                count += 1;
            }
        }
        n_patches += grid.len();
    }
    let n = corpus.len() as f64;
    Ok(ValidationReport {
        deepest_psnr: deep / n,
        bicubic_psnr: bic / n,
        regressor_mse: se / count as f64,
        zero_predictor_mse: se0 / count as f64,
        n_patches,
    })
}
