//! Base, multi-exit and joint training stages.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::{sample_batch, Corpus};
use crate::error::{Error, Result};
use crate::metrics::{incremental_capacity, psnr_values};
use crate::model::{MultiExitSr, RegressorTarget, Stage};
use crate::numerics::{
    adam_step, add, backward, l1_loss_with, mse_loss_with, scale, AdamConfig, Reduction, Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    /// Optimizer steps per epoch; 0 derives it from corpus size and batch.
    pub steps_per_epoch: usize,
    pub lr: f64,
    pub lr_decay_epoch: usize,
    pub batch_size: usize,
    pub hr_patch: usize,
    pub scale: usize,
    /// Weight of the regression loss in the joint objective.
    pub lambda: f64,
    pub seed: u64,
    pub reduction: Reduction,
    pub augment: bool,
    pub regressor_target: RegressorTarget,
    /// Divisor applied to PSNR before tanh for absolute-performance targets.
    pub ap_scale: f64,
    /// Joint stage only: train the regressor on detached features.
    pub freeze_sr: bool,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage: Stage::MultiExit,
            epochs: 300,
            steps_per_epoch: 0,
            lr: 1e-4,
            lr_decay_epoch: 200,
            batch_size: 16,
            hr_patch: 192,
            scale: 2,
            lambda: 1.0,
            seed: 0,
            reduction: Reduction::Mean,
            augment: true,
            regressor_target: RegressorTarget::IncrementalCapacity,
            ap_scale: 40.0,
            freeze_sr: false,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::config(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if self.scale == 0 || !self.hr_patch.is_multiple_of(self.scale) {
            return Err(Error::config(format!(
                "hr_patch {} is not divisible by scale {}",
                self.hr_patch, self.scale
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be positive"));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::config("lr must be positive"));
        }
        if self.stage == Stage::Untrained {
            return Err(Error::config("stage must be base, multiexit or joint"));
        }
        if self.ap_scale <= 0.0 {
            return Err(Error::config("ap_scale must be positive"));
        }
        Ok(())
    }

    pub fn steps_per_epoch_for(&self, corpus_len: usize) -> usize {
        if self.steps_per_epoch > 0 {
            self.steps_per_epoch
        } else {
            corpus_len.div_ceil(self.batch_size).max(1)
        }
    }

    /// Learning rate in `epoch`: halved once from `lr_decay_epoch` on.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.lr * 0.5
        } else {
            self.lr
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub l_m: f64,
    pub l_ic: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub log: Vec<StepLog>,
}

impl TrainReport {
    /// Mean reconstruction loss per epoch.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for s in &self.log {
            if out.len() <= s.epoch {
                out.resize(s.epoch + 1, (0.0, 0));
            }
            out[s.epoch].0 += s.l_m;
            out[s.epoch].1 += 1;
        }
        out.into_iter()
            .filter(|(_, n)| *n > 0)
            .map(|(s, n)| s / n as f64)
            .collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "step,epoch,L_m,L_ic,lr")?;
        for s in &self.log {
            writeln!(w, "{},{},{},{},{}", s.step, s.epoch, s.l_m, s.l_ic, s.lr)?;
        }
        Ok(())
    }
}

/// Per-sample reconstruction PSNRs and regression targets of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct IcTargets {
    /// `psnr[j][b]` for exits `0..=E`.
    pub psnr: Vec<Vec<f64>>,
    /// `targets[j-1][b]` for exits `1..=E`.
    pub targets: Vec<Vec<f64>>,
}

impl IcTargets {
    pub fn target_tensor(&self, exit: usize) -> Result<Tensor> {
        let t = &self.targets[exit - 1];
        Tensor::new(&[t.len(), 1], t.iter().map(|&v| v as f32).collect())
    }
}

fn per_sample_psnr(pred: &Tensor, hr: &Tensor) -> Vec<f64> {
    let b = pred.shape()[0];
    let n = pred.numel() / b;
    (0..b)
        .map(|i| psnr_values(&pred.data()[i * n..(i + 1) * n], &hr.data()[i * n..(i + 1) * n]))
        .collect()
}

/// Targets from already computed exit outputs; `outputs[0]` is exit zero.
pub fn targets_from_outputs(
    outputs: &[&Tensor],
    hr: &Tensor,
    kind: RegressorTarget,
    ap_scale: f64,
) -> Result<IcTargets> {
    for o in outputs {
        if o.shape() != hr.shape() {
            return Err(Error::shape(format!(
                "exit output {:?} vs HR {:?}",
                o.shape(),
                hr.shape()
            )));
        }
    }
    let psnr: Vec<Vec<f64>> = outputs.iter().map(|o| per_sample_psnr(o, hr)).collect();
    let targets = (1..psnr.len())
        .map(|j| {
            psnr[j]
                .iter()
                .zip(&psnr[j - 1])
                .map(|(&cur, &prev)| match kind {
                    RegressorTarget::IncrementalCapacity => incremental_capacity(cur, prev),
                    RegressorTarget::AbsolutePerformance => (cur / ap_scale).tanh(),
                })
                .collect()
        })
        .collect();
    Ok(IcTargets { psnr, targets })
}

/// Incremental-capacity targets `I_j = tanh(P_j − P_{j−1})` per sample,
/// with `P_0` from `tail(f_0)`. Computed without gradient tracking.
pub fn compute_ic_targets(model: &MultiExitSr, lr: &Tensor, hr: &Tensor) -> Result<IcTargets> {
    let outs = model.forward_exits(&lr.detach(), true)?;
    let exit_zero = outs.exit_zero.as_ref().expect("requested exit zero").detach();
    let detached: Vec<Tensor> = outs.outputs.iter().map(Tensor::detach).collect();
    let mut all = vec![&exit_zero];
    all.extend(detached.iter());
    targets_from_outputs(&all, hr, RegressorTarget::IncrementalCapacity, 1.0)
}

/// Scalar objective of one batch with its logged components.
pub struct Objective {
    pub total: Tensor,
    pub l_m: f64,
    pub l_ic: f64,
}

fn sum_all(terms: Vec<Tensor>) -> Result<Tensor> {
    let mut it = terms.into_iter();
    let mut acc = it.next().ok_or_else(|| Error::config("empty loss"))?;
    for t in it {
        acc = add(&acc, &t)?;
    }
    Ok(acc)
}

pub fn objective(model: &MultiExitSr, lr: &Tensor, hr: &Tensor, cfg: &TrainConfig) -> Result<Objective> {
    match cfg.stage {
        Stage::Base => {
            let loss = l1_loss_with(&model.forward_full(lr)?, hr, cfg.reduction)?;
            let l_m = loss.item().into();
            Ok(Objective {
                total: loss,
                l_m,
                l_ic: 0.0,
            })
        }
        Stage::MultiExit => {
            let outs = model.forward_all_exits(lr)?;
            let terms = outs
                .outputs
                .iter()
                .map(|y| l1_loss_with(y, hr, cfg.reduction))
                .collect::<Result<Vec<_>>>()?;
            let total = sum_all(terms)?;
            let l_m = total.item().into();
            Ok(Objective {
                total,
                l_m,
                l_ic: 0.0,
            })
        }
        Stage::Joint => {
            let outs = model.forward_exits(lr, true)?;
            let exit_zero = outs.exit_zero.as_ref().expect("requested exit zero");
            let mut all = vec![exit_zero];
            all.extend(outs.outputs.iter());
            let targets = targets_from_outputs(&all, hr, cfg.regressor_target, cfg.ap_scale)?;
            let rec = outs
                .outputs
                .iter()
                .map(|y| l1_loss_with(y, hr, cfg.reduction))
                .collect::<Result<Vec<_>>>()?;
            let l_m_t = sum_all(rec)?;
            let mut reg = Vec::with_capacity(model.num_exits());
            for (j, f) in outs.features.iter().enumerate() {
                let signal = if cfg.freeze_sr {
                    model.regressor.forward(&f.detach())?
                } else {
                    outs.signals[j].clone()
                };
                reg.push(mse_loss_with(
                    &signal,
                    &targets.target_tensor(j + 1)?,
                    cfg.reduction,
                )?);
            }
            let l_ic_t = sum_all(reg)?;
            let (l_m, l_ic) = (l_m_t.item().into(), l_ic_t.item().into());
            let weighted = scale(&l_ic_t, cfg.lambda);
            let total = if cfg.freeze_sr {
                weighted
            } else {
                add(&l_m_t, &weighted)?
            };
            Ok(Objective { total, l_m, l_ic })
        }
        Stage::Untrained => Err(Error::config("no objective for the untrained stage")),
    }
}

/// Backpropagates `obj` into the model's gradient buffers.
pub fn accumulate_gradients(model: &mut MultiExitSr, obj: &Objective) -> Result<()> {
    let grads = backward(&obj.total)?;
    for p in model.parameters_mut() {
        p.accumulate(&grads);
    }
    Ok(())
}

fn check_stage_order(model: &MultiExitSr, cfg: &TrainConfig) -> Result<()> {
    if cfg.stage == Stage::Joint && model.stage < Stage::MultiExit {
        return Err(Error::config(format!(
            "joint training needs a checkpoint from the multiexit stage, got stage '{}'",
            model.stage
        )));
    }
    Ok(())
}

/// Runs one training stage on `model`, calling `on_step` after every
/// optimizer step.
pub fn train(
    model: &mut MultiExitSr,
    corpus: &Corpus,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainReport> {
    cfg.validate()?;
    check_stage_order(model, cfg)?;
    if corpus.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    if corpus.scale != cfg.scale || model.config().scale != cfg.scale {
        return Err(Error::config(format!(
            "scale mismatch: config ×{}, corpus ×{}, model ×{}",
            cfg.scale,
            corpus.scale,
            model.config().scale
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per_epoch = cfg.steps_per_epoch_for(corpus.len());
    let mut report = TrainReport::default();
    // Each stage starts a fresh optimizer, so resuming from a checkpoint
    // matches an uninterrupted run.
    for p in model.parameters_mut() {
        p.reset_optimizer();
    }
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let adam = AdamConfig {
            lr: cfg.lr_at(epoch),
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
        };
        for _ in 0..per_epoch {
            let (lr_batch, hr_batch) =
                sample_batch(corpus, cfg.batch_size, cfg.hr_patch, cfg.augment, &mut rng)?;
            let obj = objective(model, &lr_batch, &hr_batch, cfg)?;
            if !obj.l_m.is_finite() || !obj.l_ic.is_finite() {
                return Err(Error::Data(format!("loss diverged at step {step}")));
            }
            accumulate_gradients(model, &obj)?;
            let (l_m, l_ic) = (obj.l_m, obj.l_ic);
            drop(obj);
            if cfg.freeze_sr {
                adam_step(model.regressor_parameters_mut(), &adam);
            } else {
                adam_step(model.parameters_mut(), &adam);
            }
            let entry = StepLog {
                step,
                epoch,
                l_m,
                l_ic,
                lr: adam.lr,
            };
            on_step(&entry);
            report.log.push(entry);
            step += 1;
        }
    }
    model.stage = cfg.stage;
    if cfg.stage == Stage::Joint {
        model.regressor_target = cfg.regressor_target;
    }
    Ok(report)
}

fn with_stage(cfg: &TrainConfig, stage: Stage) -> TrainConfig {
    TrainConfig { stage, ..cfg.clone() }
}

/// Single-exit pretraining: L1 on the deepest exit only.
pub fn train_base(model: &mut MultiExitSr, corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainReport> {
    train(model, corpus, &with_stage(cfg, Stage::Base), |_| {})
}

/// Minimizes the sum of per-exit L1 losses.
pub fn train_multiexit(model: &mut MultiExitSr, corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainReport> {
    train(model, corpus, &with_stage(cfg, Stage::MultiExit), |_| {})
}

/// Minimizes the multi-exit loss plus λ times the regression loss, with
/// targets recomputed from the current network every step.
pub fn train_joint(model: &mut MultiExitSr, corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainReport> {
    train(model, corpus, &with_stage(cfg, Stage::Joint), |_| {})
}
