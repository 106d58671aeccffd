use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Where the per-exit exit signal comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalSource {
    /// The trained incremental-capacity regressor.
    Regressor,
    /// True incremental capacity measured against the HR reference.
    Oracle,
    /// Regressor trained on absolute performance; exits once the predicted
    /// performance exceeds the threshold.
    AbsolutePerformance,
}

impl fmt::Display for SignalSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalSource::Regressor => "regressor",
            SignalSource::Oracle => "oracle",
            SignalSource::AbsolutePerformance => "absolute_performance",
        })
    }
}

impl FromStr for SignalSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regressor" => Ok(SignalSource::Regressor),
            "oracle" => Ok(SignalSource::Oracle),
            "absolute_performance" | "ap" => Ok(SignalSource::AbsolutePerformance),
            other => Err(Error::config(format!("unknown signal source '{other}'"))),
        }
    }
}

/// Which feature a retiring patch is reconstructed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExitOutput {
    /// The feature before the blocks whose gain fell below the threshold.
    #[default]
    Previous,
    /// The feature at the exit where the signal fired.
    Current,
}

impl FromStr for ExitOutput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "previous" => Ok(ExitOutput::Previous),
            "current" => Ok(ExitOutput::Current),
            other => Err(Error::config(format!("unknown exit output '{other}'"))),
        }
    }
}

impl fmt::Display for ExitOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExitOutput::Previous => "previous",
            ExitOutput::Current => "current",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitPolicy {
    pub threshold: f64,
    pub signal_source: SignalSource,
    pub output: ExitOutput,
}

impl ExitPolicy {
    pub fn new(threshold: f64, signal_source: SignalSource) -> Result<Self> {
        let p = ExitPolicy {
            threshold,
            signal_source,
            output: ExitOutput::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn regressor(threshold: f64) -> Result<Self> {
        Self::new(threshold, SignalSource::Regressor)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!(
                "threshold must lie in [-1, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Whether a patch with this signal leaves at the current exit.
    ///
    /// Gains are compared with `<`: a threshold of −1 never fires and a
    /// threshold of 1 always does (the signal range is open). Absolute
    /// performance fires once it exceeds the threshold.
    pub fn fires(&self, signal: f64) -> bool {
        match self.signal_source {
            SignalSource::Regressor | SignalSource::Oracle => {
                self.threshold >= 1.0 || signal < self.threshold
            }
            SignalSource::AbsolutePerformance => signal > self.threshold,
        }
    }

    /// Feature a patch retiring at an exit where the signal fired uses.
    pub fn output_on_fire(&self) -> ExitOutput {
        match self.signal_source {
            SignalSource::AbsolutePerformance => ExitOutput::Current,
            _ => self.output,
        }
    }
}
