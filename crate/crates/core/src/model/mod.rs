//! Multi-exit residual SR backbone with a shared incremental-capacity
//! regressor.
//!
//! The network is head → N residual blocks → tail. Exits sit every
//! `exit_interval` blocks; every exit reuses the same tail and the same
//! regressor (global average pool, one fully-connected unit, tanh).

mod checkpoint;
mod config;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    add, conv2d, global_avg_pool, linear, pixel_shuffle, relu, scale, tanh_op, Parameter, Tensor,
};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, FORMAT_VERSION};
pub use config::{BackboneConfig, Preset};

/// Training stage a set of weights has completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Untrained,
    Base,
    MultiExit,
    Joint,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Untrained => "untrained",
            Stage::Base => "base",
            Stage::MultiExit => "multiexit",
            Stage::Joint => "joint",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "untrained" => Ok(Stage::Untrained),
            "base" => Ok(Stage::Base),
            "multiexit" => Ok(Stage::MultiExit),
            "joint" => Ok(Stage::Joint),
            other => Err(Error::config(format!("unknown stage '{other}'"))),
        }
    }
}

/// What the regressor was trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressorTarget {
    /// tanh of the PSNR gain of the latest exit's blocks.
    IncrementalCapacity,
    /// tanh of the exit's absolute PSNR divided by a scale (ablation).
    AbsolutePerformance,
}

impl fmt::Display for RegressorTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegressorTarget::IncrementalCapacity => "ic",
            RegressorTarget::AbsolutePerformance => "ap",
        })
    }
}

impl FromStr for RegressorTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ic" => Ok(RegressorTarget::IncrementalCapacity),
            "ap" => Ok(RegressorTarget::AbsolutePerformance),
            other => Err(Error::config(format!("unknown regressor target '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: Parameter,
    pub bias: Parameter,
    pub padding: usize,
}

impl Conv {
    fn init(name: &str, cin: usize, cout: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let fan_in = (cin * k * k) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let mut draw =
            |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-bound..bound) as f32).collect() };
        let w = draw(cout * cin * k * k);
        let b = draw(cout);
        Ok(Conv {
            weight: Parameter::new(format!("{name}.weight"), &[cout, cin, k, k], w)?,
            bias: Parameter::new(format!("{name}.bias"), &[cout], b)?,
            padding: (k - 1) / 2,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, self.weight.value(), self.bias.value(), self.padding)
    }
}

/// conv → relu → conv, scaled and added to the input.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
}

impl ResBlock {
    fn forward(&self, x: &Tensor, residual_scaling: f64) -> Result<Tensor> {
        let r = self.conv2.forward(&relu(&self.conv1.forward(x)?))?;
        add(x, &scale(&r, residual_scaling))
    }
}

#[derive(Debug, Clone)]
pub struct Tail {
    /// (conv producing C·r² channels, shuffle factor r) per stage.
    pub upsample: Vec<(Conv, usize)>,
    pub out: Conv,
}

impl Tail {
    fn forward(&self, f: &Tensor) -> Result<Tensor> {
        let mut x = f.clone();
        for (conv, r) in &self.upsample {
            x = pixel_shuffle(&conv.forward(&x)?, *r)?;
        }
        self.out.forward(&x)
    }
}

/// Shared estimator: `tanh(W · gap(f) + b)`.
#[derive(Debug, Clone)]
pub struct Regressor {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Regressor {
    pub fn forward(&self, f: &Tensor) -> Result<Tensor> {
        let pooled = global_avg_pool(f)?;
        Ok(tanh_op(&linear(&pooled, self.weight.value(), self.bias.value())?))
    }
}

/// Body feature after `exit` exits (`exit == 0` is the head output).
#[derive(Debug, Clone)]
pub struct ExitState {
    pub feature: Tensor,
    pub exit: usize,
}

impl ExitState {
    pub fn detach(&self) -> Self {
        ExitState {
            feature: self.feature.detach(),
            exit: self.exit,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(ExitState {
            feature: self.feature.select_batch(indices)?,
            exit: self.exit,
        })
    }
}

/// Outputs of every exit for one batch.
#[derive(Debug, Clone)]
pub struct ExitOutputs {
    /// `tail(f_0)`, when requested.
    pub exit_zero: Option<Tensor>,
    /// `ŷ_j` for exits `1..=E`, each `[B, 3, s·h, s·w]`.
    pub outputs: Vec<Tensor>,
    /// Regressor predictions for exits `1..=E`, each `[B, 1]`.
    pub signals: Vec<Tensor>,
    /// Body features `f_j` for exits `1..=E`.
    pub features: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct MultiExitSr {
    config: BackboneConfig,
    pub head: Conv,
    pub body: Vec<ResBlock>,
    pub tail: Tail,
    pub regressor: Regressor,
    pub stage: Stage,
    pub regressor_target: RegressorTarget,
}

impl MultiExitSr {
    /// Deterministic initialization from `seed`: fan-in scaled uniform
    /// convolutions, zero regressor.
    pub fn build(config: BackboneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.channels;
        let head = Conv::init("head", 3, c, 3, &mut rng)?;
        let body = (0..config.num_blocks)
            .map(|i| {
                Ok(ResBlock {
                    conv1: Conv::init(&format!("body.{i:03}.conv1"), c, c, 3, &mut rng)?,
                    conv2: Conv::init(&format!("body.{i:03}.conv2"), c, c, 3, &mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let upsample = config
            .upsample_factors()
            .into_iter()
            .enumerate()
            .map(|(i, r)| Ok((Conv::init(&format!("tail.up{i}"), c, c * r * r, 3, &mut rng)?, r)))
            .collect::<Result<Vec<_>>>()?;
        let out = Conv::init("tail.out", c, 3, 3, &mut rng)?;
        let regressor = Regressor {
            weight: Parameter::new("regressor.weight", &[1, c], vec![0.0; c])?,
            bias: Parameter::new("regressor.bias", &[1], vec![0.0])?,
        };
        Ok(MultiExitSr {
            config,
            head,
            body,
            tail: Tail { upsample, out },
            regressor,
            stage: Stage::Untrained,
            regressor_target: RegressorTarget::IncrementalCapacity,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn num_exits(&self) -> usize {
        self.config.num_exits()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::shape(format!(
                "expected an RGB batch [B,3,h,w], got {s:?}"
            )));
        }
        Ok(())
    }

    /// `f_0 = head(x)`.
    pub fn head_state(&self, x: &Tensor) -> Result<ExitState> {
        self.check_input(x)?;
        Ok(ExitState {
            feature: self.head.forward(x)?,
            exit: 0,
        })
    }

    /// Advances `exit_interval` blocks to the next exit and evaluates the
    /// regressor there. Returns the new state and `Î_j` of shape `[B, 1]`.
    pub fn forward_step(&self, state: &ExitState) -> Result<(ExitState, Tensor)> {
        let next = state.exit + 1;
        if next > self.num_exits() {
            return Err(Error::Inference(format!(
                "cannot step past the last exit ({})",
                self.num_exits()
            )));
        }
        let k = self.config.exit_interval;
        let mut f = state.feature.clone();
        for block in &self.body[state.exit * k..next * k] {
            f = block.forward(&f, self.config.residual_scaling)?;
        }
        let signal = self.regressor.forward(&f)?;
        Ok((
            ExitState {
                feature: f,
                exit: next,
            },
            signal,
        ))
    }

    /// `ŷ = tail(f)`.
    pub fn tail(&self, feature: &Tensor) -> Result<Tensor> {
        self.tail.forward(feature)
    }

    pub fn forward_all_exits(&self, x: &Tensor) -> Result<ExitOutputs> {
        self.forward_exits(x, false)
    }

    /// All exits' outputs and predictions; with `exit_zero` also
    /// `tail(f_0)` computed on a detached head feature.
    pub fn forward_exits(&self, x: &Tensor, exit_zero: bool) -> Result<ExitOutputs> {
        let mut state = self.head_state(x)?;
        let exit_zero = if exit_zero {
            Some(self.tail(&state.feature.detach())?)
        } else {
            None
        };
        let mut outputs = Vec::with_capacity(self.num_exits());
        let mut signals = Vec::with_capacity(self.num_exits());
        let mut features = Vec::with_capacity(self.num_exits());
        for _ in 0..self.num_exits() {
            let (next, signal) = self.forward_step(&state)?;
            outputs.push(self.tail(&next.feature)?);
            signals.push(signal);
            features.push(next.feature.clone());
            state = next;
        }
        Ok(ExitOutputs {
            exit_zero,
            outputs,
            signals,
            features,
        })
    }

    /// Output of the deepest exit only.
    pub fn forward_full(&self, x: &Tensor) -> Result<Tensor> {
        let mut state = self.head_state(x)?;
        while state.exit < self.num_exits() {
            state = self.forward_step(&state)?.0;
        }
        self.tail(&state.feature)
    }

    fn all_params(&self) -> Vec<&Parameter> {
        let mut v = vec![&self.head.weight, &self.head.bias];
        for b in &self.body {
            v.extend([&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias]);
        }
        for (c, _) in &self.tail.upsample {
            v.extend([&c.weight, &c.bias]);
        }
        v.extend([&self.tail.out.weight, &self.tail.out.bias]);
        v.extend([&self.regressor.weight, &self.regressor.bias]);
        v
    }

    /// All parameters in ascending name order.
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.all_params();
        v.sort_by(|a, b| a.name().cmp(b.name()));
        v
    }

    /// All parameters (mutable), ascending name order.
    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v: Vec<&mut Parameter> = vec![&mut self.head.weight, &mut self.head.bias];
        for b in &mut self.body {
            v.extend([
                &mut b.conv1.weight,
                &mut b.conv1.bias,
                &mut b.conv2.weight,
                &mut b.conv2.bias,
            ]);
        }
        for (c, _) in &mut self.tail.upsample {
            v.extend([&mut c.weight, &mut c.bias]);
        }
        v.extend([&mut self.tail.out.weight, &mut self.tail.out.bias]);
        v.extend([&mut self.regressor.weight, &mut self.regressor.bias]);
        v.sort_by(|a, b| a.name().cmp(b.name()));
        v
    }

    pub fn regressor_parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.regressor.bias, &mut self.regressor.weight]
    }

    pub fn num_parameters(&self) -> usize {
        self.all_params().iter().map(|p| p.numel()).sum()
    }

    /// Copies head, body and tail weights from a model with the same
    /// architecture but possibly a different exit layout (e.g. a
    /// single-exit pretrain). Returns the number of tensors copied.
    pub fn warm_start_from(&mut self, other: &MultiExitSr) -> Result<usize> {
        let (a, b) = (self.config, other.config);
        if a.scale != b.scale || a.channels != b.channels || a.num_blocks != b.num_blocks {
            return Err(Error::config(format!(
                "cannot warm start: scale/channels/blocks {}/{}/{} vs {}/{}/{}",
                a.scale, a.channels, a.num_blocks, b.scale, b.channels, b.num_blocks
            )));
        }
        let src: std::collections::HashMap<&str, &Parameter> =
            other.parameters().into_iter().map(|p| (p.name(), p)).collect();
        let mut copied = 0;
        for p in self.parameters_mut() {
            if p.name().starts_with("regressor.") {
                continue;
            }
            let s = src
                .get(p.name())
                .ok_or_else(|| Error::config(format!("source lacks parameter {}", p.name())))?;
            p.set_data(s.data().to_vec())?;
            copied += 1;
        }
        Ok(copied)
    }
}
