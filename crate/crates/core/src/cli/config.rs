use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::TrainConfig;
use crate::engine::{ExitOutput, ExitPolicy, InferenceOptions, SignalSource};
use crate::error::{Error, Result};
use crate::model::{BackboneConfig, Preset, RegressorTarget, Stage};
use crate::numerics::Reduction;

/// Every key a config file or `--set` may name, in echo order.
pub const KEYS: &[&str] = &[
    "preset",
    "scale",
    "channels",
    "num_blocks",
    "exit_interval",
    "residual_scaling",
    "stage",
    "epochs",
    "steps_per_epoch",
    "lr",
    "lr_decay_epoch",
    "batch_size",
    "hr_patch",
    "lambda",
    "seed",
    "reduction",
    "augment",
    "regressor_target",
    "ap_scale",
    "freeze_sr",
    "beta1",
    "beta2",
    "threshold",
    "thresholds",
    "signal_source",
    "exit_output",
    "patch_size",
    "stride",
    "parallel_size",
    "corpus",
    "checkpoint",
    "input",
    "hr",
    "exit_map",
    "threads",
];

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: BackboneConfig,
    pub train: TrainConfig,
    pub policy: ExitPolicy,
    pub inference: InferenceOptions,
    pub thresholds: Vec<f64>,
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub hr: Option<PathBuf>,
    pub exit_map: bool,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::resolve(&BTreeMap::new()).expect("defaults resolve")
    }
}

/// Training defaults sized for a laptop CPU and the tiny preset.
///
/// Each stage runs three equal epochs and halves its learning rate for the
/// last one. The learning rate shrinks from stage to stage, and the joint
/// stage weights the regression loss by 0.1.
pub fn desk_train_defaults(stage: Stage) -> TrainConfig {
    let (steps, lr, lambda) = match stage {
        Stage::Untrained | Stage::Base => (3000, 2e-3, 1.0),
        Stage::MultiExit => (1500, 1e-3, 1.0),
        Stage::Joint => (1500, 5e-4, 0.1),
    };
    TrainConfig {
        stage,
        epochs: 3,
        steps_per_epoch: steps / 3,
        lr,
        lr_decay_epoch: 2,
        batch_size: 8,
        hr_patch: 48,
        lambda,
        ..TrainConfig::default()
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!(
            "invalid boolean '{value}' for key '{key}'"
        ))),
    }
}

fn parse_reduction(value: &str) -> Result<Reduction> {
    match value {
        "mean" => Ok(Reduction::Mean),
        "sum" => Ok(Reduction::Sum),
        other => Err(Error::config(format!("unknown reduction '{other}'"))),
    }
}

fn reduction_name(r: Reduction) -> &'static str {
    match r {
        Reduction::Mean => "mean",
        Reduction::Sum => "sum",
    }
}

/// Parses a flat `key = value` document. `#` starts a comment.
pub fn parse_document(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = parse_assignment(line).map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        out.insert(k, v);
    }
    Ok(out)
}

/// Splits `key=value`, trimming both sides and checking the key.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("expected key=value, got '{s}'")))?;
    let (k, v) = (k.trim(), v.trim());
    if !KEYS.contains(&k) {
        return Err(Error::config(format!("unknown key '{k}'")));
    }
    Ok((k.to_string(), v.to_string()))
}

impl RunConfig {
    /// Reads an optional config file and applies `overrides` on top.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut pairs = match file {
            Some(p) => parse_document(&std::fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        for o in overrides {
            let (k, v) = parse_assignment(o)?;
            pairs.insert(k, v);
        }
        RunConfig::resolve(&pairs)
    }

    /// Builds a config from explicit pairs; the preset fixes model defaults
    /// before individual model keys apply.
    pub fn resolve(pairs: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::config(format!("unknown key '{k}'")));
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let scale = match get("scale") {
            Some(v) => parse("scale", v)?,
            None => 2,
        };
        let preset: Preset = get("preset").unwrap_or("tiny").parse()?;
        let mut model = match preset {
            Preset::Tiny => BackboneConfig::tiny(scale),
            Preset::Edsr => BackboneConfig::edsr(scale),
        };
        let stage: Stage = get("stage").unwrap_or("multiexit").parse()?;
        let mut train = desk_train_defaults(stage);
        train.scale = scale;
        let mut policy = ExitPolicy::regressor(0.0)?;
        let mut inference = InferenceOptions::default();
        let mut thresholds = vec![-1.0, -0.5, -0.25, -0.1, 0.0, 0.1, 0.25, 0.5, 1.0];
        let (mut corpus, mut checkpoint, mut input, mut hr) = (None, None, None, None);
        let (mut exit_map, mut threads) = (false, 0);
        for (k, v) in pairs {
            let (k, v) = (k.as_str(), v.as_str());
            match k {
                "preset" | "scale" | "stage" => {}
                "channels" => model.channels = parse(k, v)?,
                "num_blocks" => model.num_blocks = parse(k, v)?,
                "exit_interval" => model.exit_interval = parse(k, v)?,
                "residual_scaling" => model.residual_scaling = parse(k, v)?,
                "epochs" => train.epochs = parse(k, v)?,
                "steps_per_epoch" => train.steps_per_epoch = parse(k, v)?,
                "lr" => train.lr = parse(k, v)?,
                "lr_decay_epoch" => train.lr_decay_epoch = parse(k, v)?,
                "batch_size" => train.batch_size = parse(k, v)?,
                "hr_patch" => train.hr_patch = parse(k, v)?,
                "lambda" => train.lambda = parse(k, v)?,
                "seed" => train.seed = parse(k, v)?,
                "reduction" => train.reduction = parse_reduction(v)?,
                "augment" => train.augment = parse_bool(k, v)?,
                "regressor_target" => train.regressor_target = v.parse::<RegressorTarget>()?,
                "ap_scale" => train.ap_scale = parse(k, v)?,
                "freeze_sr" => train.freeze_sr = parse_bool(k, v)?,
                "beta1" => train.beta1 = parse(k, v)?,
                "beta2" => train.beta2 = parse(k, v)?,
                "threshold" => policy.threshold = parse(k, v)?,
                "thresholds" => {
                    thresholds = v
                        .split(',')
                        .map(|t| parse("thresholds", t.trim()))
                        .collect::<Result<_>>()?
                }
                "signal_source" => policy.signal_source = v.parse::<SignalSource>()?,
                "exit_output" => policy.output = v.parse::<ExitOutput>()?,
                "patch_size" => inference.patch_size = parse(k, v)?,
                "stride" => inference.stride = parse(k, v)?,
                "parallel_size" => inference.parallel_size = parse(k, v)?,
                "corpus" => corpus = Some(PathBuf::from(v)),
                "checkpoint" => checkpoint = Some(PathBuf::from(v)),
                "input" => input = Some(PathBuf::from(v)),
                "hr" => hr = Some(PathBuf::from(v)),
                "exit_map" => exit_map = parse_bool(k, v)?,
                "threads" => threads = parse(k, v)?,
                _ => unreachable!("key list checked above"),
            }
        }
        model.validate()?;
        train.validate()?;
        policy.validate()?;
        if inference.patch_size == 0 || inference.stride == 0 || inference.parallel_size == 0 {
            return Err(Error::config(
                "patch_size, stride and parallel_size must be positive",
            ));
        }
        if thresholds.is_empty() || thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("thresholds must be a non-empty ascending list"));
        }
        Ok(RunConfig {
            model,
            train,
            policy,
            inference,
            thresholds,
            corpus,
            checkpoint,
            input,
            hr,
            exit_map,
            threads,
        })
    }

    /// Resolved settings as a document `parse_document` reads back.
    pub fn to_document(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let thresholds: Vec<String> = self.thresholds.iter().map(|t| t.to_string()).collect();
        let values: Vec<(&str, String)> = vec![
            ("preset", m.preset.to_string()),
            ("scale", m.scale.to_string()),
            ("channels", m.channels.to_string()),
            ("num_blocks", m.num_blocks.to_string()),
            ("exit_interval", m.exit_interval.to_string()),
            ("residual_scaling", m.residual_scaling.to_string()),
            ("stage", t.stage.to_string()),
            ("epochs", t.epochs.to_string()),
            ("steps_per_epoch", t.steps_per_epoch.to_string()),
            ("lr", t.lr.to_string()),
            ("lr_decay_epoch", t.lr_decay_epoch.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("hr_patch", t.hr_patch.to_string()),
            ("lambda", t.lambda.to_string()),
            ("seed", t.seed.to_string()),
            ("reduction", reduction_name(t.reduction).to_string()),
            ("augment", t.augment.to_string()),
            ("regressor_target", t.regressor_target.to_string()),
            ("ap_scale", t.ap_scale.to_string()),
            ("freeze_sr", t.freeze_sr.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("threshold", self.policy.threshold.to_string()),
            ("thresholds", thresholds.join(",")),
            ("signal_source", self.policy.signal_source.to_string()),
            ("exit_output", self.policy.output.to_string()),
            ("patch_size", self.inference.patch_size.to_string()),
            ("stride", self.inference.stride.to_string()),
            ("parallel_size", self.inference.parallel_size.to_string()),
            ("corpus", path(&self.corpus)),
            ("checkpoint", path(&self.checkpoint)),
            ("input", path(&self.input)),
            ("hr", path(&self.hr)),
            ("exit_map", self.exit_map.to_string()),
            ("threads", self.threads.to_string()),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        let mut s = String::new();
        for (k, v) in values {
            if !v.is_empty() {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }
}
