use rayon::prelude::*;

use super::policy::{ExitOutput, ExitPolicy, SignalSource};
use super::trace::{ExitTrace, PatchTrace};
use crate::error::{Error, Result};
use crate::imageio::PlanarImage;
use crate::metrics::{incremental_capacity, psnr_values, CostModel};
use crate::model::{MultiExitSr, RegressorTarget, Stage};
use crate::numerics::Tensor;
use crate::patchwork::{merge, split_for_scale};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceOptions {
    pub patch_size: usize,
    pub stride: usize,
    /// Patches forwarded together; each group is compacted independently.
    pub parallel_size: usize,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            patch_size: 48,
            stride: 46,
            parallel_size: 16,
        }
    }
}

/// Result for one patch before placement.
struct PatchResult {
    output: PlanarImage,
    exit_index: usize,
    output_exit: usize,
    signals: Vec<f64>,
}

fn check_model(model: &MultiExitSr, policy: &ExitPolicy) -> Result<()> {
    policy.validate()?;
    if model
        .parameters()
        .iter()
        .any(|p| p.data().iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Inference("model has non-finite parameters".into()));
    }
    let needs = match policy.signal_source {
        SignalSource::Oracle => None,
        SignalSource::Regressor => Some(RegressorTarget::IncrementalCapacity),
        SignalSource::AbsolutePerformance => Some(RegressorTarget::AbsolutePerformance),
    };
    if let Some(target) = needs {
        if model.stage < Stage::Joint || model.regressor_target != target {
            return Err(Error::Inference(format!(
                "signal source '{}' needs a regressor jointly trained on '{target}' targets \
                 (model stage '{}', target '{}')",
                policy.signal_source, model.stage, model.regressor_target
            )));
        }
    }
    Ok(())
}

fn rows_as_images(t: &Tensor) -> Result<Vec<PlanarImage>> {
    (0..t.shape()[0])
        .map(|i| PlanarImage::from_tensor(&t.batch_item(i)?))
        .collect()
}

fn row_psnr(t: &Tensor, hr: &[&PlanarImage]) -> Vec<f64> {
    let n = t.numel() / t.shape()[0];
    hr.iter()
        .enumerate()
        .map(|(i, h)| psnr_values(&t.data()[i * n..(i + 1) * n], h.data()))
        .collect()
}

/// Runs one group of patches through the exits, retiring patches as their
/// signal fires and shrinking the batch.
fn run_group(
    model: &MultiExitSr,
    lr: &[&PlanarImage],
    hr: Option<&[&PlanarImage]>,
    policy: &ExitPolicy,
) -> Result<Vec<PatchResult>> {
    let n_exits = model.num_exits();
    let items: Vec<Tensor> = lr
        .iter()
        .map(|p| p.to_tensor().batch_item(0))
        .collect::<Result<_>>()?;
    let mut state = model.head_state(&Tensor::stack(&items)?)?.detach();
    // Original positions of the rows of `state`.
    let mut active: Vec<usize> = (0..lr.len()).collect();
    let mut signals: Vec<Vec<f64>> = vec![Vec::new(); lr.len()];
    let mut results: Vec<Option<PatchResult>> = (0..lr.len()).map(|_| None).collect();

    let oracle = policy.signal_source == SignalSource::Oracle;
    // Oracle mode: tail outputs and PSNR of the rows of `state`.
    let mut prev_tail = None;
    let mut prev_psnr = Vec::new();
    if oracle {
        let hr = hr.ok_or_else(|| Error::Inference("oracle signal needs HR references".into()))?;
        let t = model.tail(&state.feature)?.detach();
        let refs: Vec<&PlanarImage> = active.iter().map(|&i| hr[i]).collect();
        prev_psnr = row_psnr(&t, &refs);
        prev_tail = Some(t);
    }

    for exit in 1..=n_exits {
        let (next, signal) = model.forward_step(&state)?;
        let next = next.detach();
        let mut cur_tail = None;
        let step_signal: Vec<f64> = if oracle {
            let hr = hr.expect("checked above");
            let t = model.tail(&next.feature)?.detach();
            let refs: Vec<&PlanarImage> = active.iter().map(|&i| hr[i]).collect();
            let p = row_psnr(&t, &refs);
            let ic = p
                .iter()
                .zip(&prev_psnr)
                .map(|(&c, &q)| incremental_capacity(c, q))
                .collect();
            prev_psnr = p;
            cur_tail = Some(t);
            ic
        } else {
            signal.data().iter().map(|&v| f64::from(v)).collect()
        };

        let mut from_prev = Vec::new();
        let mut from_cur = Vec::new();
        let mut survivors = Vec::new();
        for (row, &s) in step_signal.iter().enumerate() {
            signals[active[row]].push(s);
            if policy.fires(s) {
                match policy.output_on_fire() {
                    ExitOutput::Previous => from_prev.push(row),
                    ExitOutput::Current => from_cur.push(row),
                }
            } else if exit == n_exits {
                from_cur.push(row);
            } else {
                survivors.push(row);
            }
        }

        for (rows, feature_exit) in [(&from_prev, exit - 1), (&from_cur, exit)] {
            if rows.is_empty() {
                continue;
            }
            let cached = if feature_exit == exit {
                &cur_tail
            } else {
                &prev_tail
            };
            let out = match cached {
                Some(t) => t.select_batch(rows)?,
                None => {
                    let f = if feature_exit == exit { &next } else { &state };
                    model.tail(&f.select(rows)?.feature)?.detach()
                }
            };
            for (k, img) in rows_as_images(&out)?.into_iter().enumerate() {
                let idx = active[rows[k]];
                results[idx] = Some(PatchResult {
                    output: img,
                    exit_index: exit,
                    output_exit: feature_exit,
                    signals: std::mem::take(&mut signals[idx]),
                });
            }
        }

        if survivors.is_empty() {
            break;
        }
        state = next.select(&survivors)?;
        if oracle {
            prev_tail = Some(cur_tail.expect("oracle tail").select_batch(&survivors)?);
            prev_psnr = survivors.iter().map(|&r| prev_psnr[r]).collect();
        }
        active = survivors.iter().map(|&r| active[r]).collect();
    }
    Ok(results
        .into_iter()
        .map(|r| r.expect("every patch retires by the last exit"))
        .collect())
}

/// Runs patches in groups of `parallel_size`; groups are independent and
/// may run concurrently. Results are in input order.
pub fn run_patches(
    model: &MultiExitSr,
    lr_patches: &[PlanarImage],
    hr_patches: Option<&[PlanarImage]>,
    policy: &ExitPolicy,
    parallel_size: usize,
) -> Result<Vec<(PlanarImage, PatchTrace)>> {
    check_model(model, policy)?;
    if parallel_size == 0 {
        return Err(Error::config("parallel_size must be positive"));
    }
    if let Some(hr) = hr_patches {
        if hr.len() != lr_patches.len() {
            return Err(Error::shape("LR and HR patch counts differ"));
        }
    }
    if lr_patches.is_empty() {
        return Ok(Vec::new());
    }
    let (ph, pw) = (lr_patches[0].height(), lr_patches[0].width());
    let cost = CostModel::new(model.config(), ph, pw);
    let lr_refs: Vec<&PlanarImage> = lr_patches.iter().collect();
    let hr_refs: Option<Vec<&PlanarImage>> = hr_patches.map(|h| h.iter().collect());
    let groups: Vec<(usize, usize)> = (0..lr_patches.len())
        .step_by(parallel_size)
        .map(|s| (s, (s + parallel_size).min(lr_patches.len())))
        .collect();
    let outs = groups
        .par_iter()
        .map(|&(s, e)| run_group(model, &lr_refs[s..e], hr_refs.as_ref().map(|h| &h[s..e]), policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(outs
        .into_iter()
        .flatten()
        .map(|r| {
            let trace = PatchTrace {
                coord: (0, 0),
                exit_index: r.exit_index,
                output_exit: r.output_exit,
                signals: r.signals,
                macs: cost.row(r.exit_index).total(),
            };
            (r.output, trace)
        })
        .collect())
}

/// Split → adaptive per-patch inference → merge.
///
/// `hr` is required for the oracle signal and ignored otherwise.
pub fn super_resolve(
    model: &MultiExitSr,
    image: &PlanarImage,
    policy: &ExitPolicy,
    opts: &InferenceOptions,
    hr: Option<&PlanarImage>,
) -> Result<(PlanarImage, ExitTrace)> {
    let scale = model.config().scale;
    let (grid, lr_patches) = split_for_scale(image, opts.patch_size, opts.stride, scale)?;
    let hr_patches = match (policy.signal_source, hr) {
        (SignalSource::Oracle, Some(hr)) => {
            let hg = grid.scaled();
            if (hr.height(), hr.width()) != hg.image_size {
                return Err(Error::shape("HR reference does not match the enlarged image"));
            }
            Some(hg.extract(hr)?)
        }
        (SignalSource::Oracle, None) => {
            return Err(Error::Inference("oracle signal needs an HR reference".into()))
        }
        _ => None,
    };
    let results = run_patches(
        model,
        &lr_patches,
        hr_patches.as_deref(),
        policy,
        opts.parallel_size,
    )?;
    let mut outputs = Vec::with_capacity(results.len());
    let mut patches = Vec::with_capacity(results.len());
    for ((img, mut trace), &coord) in results.into_iter().zip(&grid.coords) {
        trace.coord = coord;
        outputs.push(img);
        patches.push(trace);
    }
    let sr = merge(&grid, &outputs, scale)?;
    Ok((
        sr,
        ExitTrace {
            patches,
            num_exits: model.num_exits(),
        },
    ))
}
