use std::io::Write;

use super::policy::ExitPolicy;
use super::run::{super_resolve, InferenceOptions};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim};
use crate::model::MultiExitSr;

/// One point of the quality/compute frontier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub threshold: f64,
    pub mean_exit_depth: f64,
    pub mean_macs_per_patch: f64,
    pub total_macs: u64,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Evaluates `policy` at every threshold over all images of `corpus`.
/// Outputs are quantized to 8 bits before PSNR/SSIM against the HR images.
pub fn sweep(
    model: &MultiExitSr,
    corpus: &Corpus,
    thresholds: &[f64],
    policy: &ExitPolicy,
    opts: &InferenceOptions,
) -> Result<Vec<TradeoffPoint>> {
    if corpus.is_empty() {
        return Err(Error::Data(
            "sweep needs at least one image with an HR reference".into(),
        ));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::config("thresholds must be sorted ascending"));
    }
    thresholds
        .iter()
        .map(|&t| {
            let p = ExitPolicy {
                threshold: t,
                ..*policy
            };
            evaluate(model, corpus, &p, opts)
        })
        .collect()
}

/// Single-threshold evaluation.
pub fn evaluate(
    model: &MultiExitSr,
    corpus: &Corpus,
    policy: &ExitPolicy,
    opts: &InferenceOptions,
) -> Result<TradeoffPoint> {
    let (mut total_macs, mut patches, mut depth) = (0u64, 0usize, 0.0);
    let (mut ps, mut ss) = (0.0, 0.0);
    for pair in &corpus.pairs {
        let (sr, trace) = super_resolve(model, &pair.lr, policy, opts, Some(&pair.hr))?;
        let sr = sr.quantized();
        ps += psnr(&sr, &pair.hr)?;
        ss += ssim(&sr, &pair.hr)?;
        total_macs += trace.total_macs();
        patches += trace.len();
        depth += trace.exit_indices().iter().sum::<usize>() as f64;
    }
    let n = corpus.len() as f64;
    Ok(TradeoffPoint {
        threshold: policy.threshold,
        mean_exit_depth: depth / patches as f64,
        mean_macs_per_patch: total_macs as f64 / patches as f64,
        total_macs,
        psnr_db: ps / n,
        ssim: ss / n,
    })
}

pub fn write_sweep_csv(points: &[TradeoffPoint], mut w: impl Write) -> Result<()> {
    writeln!(
        w,
        "threshold,mean_exit_depth,mean_macs_per_patch,total_macs,psnr_db,ssim"
    )?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.threshold, p.mean_exit_depth, p.mean_macs_per_patch, p.total_macs, p.psnr_db, p.ssim
        )?;
    }
    Ok(())
}
