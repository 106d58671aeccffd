use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Tiny,
    Edsr,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Tiny => "tiny",
            Preset::Edsr => "edsr",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "edsr" => Ok(Preset::Edsr),
            other => Err(Error::config(format!("unknown preset '{other}'"))),
        }
    }
}

/// Shape of a multi-exit backbone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneConfig {
    pub preset: Preset,
    pub scale: usize,
    pub channels: usize,
    pub num_blocks: usize,
    pub exit_interval: usize,
    pub residual_scaling: f64,
}

impl BackboneConfig {
    /// 16 channels, 8 blocks, an exit every 2 blocks.
    pub fn tiny(scale: usize) -> Self {
        BackboneConfig {
            preset: Preset::Tiny,
            scale,
            channels: 16,
            num_blocks: 8,
            exit_interval: 2,
            residual_scaling: 1.0,
        }
    }

    /// EDSR-sized body: 256 channels, 32 blocks, an exit every 4 blocks.
    pub fn edsr(scale: usize) -> Self {
        BackboneConfig {
            preset: Preset::Edsr,
            scale,
            channels: 256,
            num_blocks: 32,
            exit_interval: 4,
            residual_scaling: 0.1,
        }
    }

    pub fn preset(preset: Preset, scale: usize) -> Self {
        match preset {
            Preset::Tiny => Self::tiny(scale),
            Preset::Edsr => Self::edsr(scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale, 2..=4) {
            return Err(Error::config(format!(
                "scale must be 2, 3 or 4, got {}",
                self.scale
            )));
        }
        if self.channels == 0 || self.num_blocks == 0 || self.exit_interval == 0 {
            return Err(Error::config(
                "channels, num_blocks and exit_interval must be positive",
            ));
        }
        if !self.num_blocks.is_multiple_of(self.exit_interval) {
            return Err(Error::config(format!(
                "exit_interval {} does not divide num_blocks {}",
                self.exit_interval, self.num_blocks
            )));
        }
        if !(self.residual_scaling >= 0.0 && self.residual_scaling <= 1.0) {
            return Err(Error::config(format!(
                "residual_scaling must lie in [0, 1], got {}",
                self.residual_scaling
            )));
        }
        Ok(())
    }

    pub fn num_exits(&self) -> usize {
        self.num_blocks / self.exit_interval
    }

    /// Body depth (in blocks) reached at exit `j`; exit 0 is the head output.
    pub fn exit_depth(&self, exit: usize) -> usize {
        exit * self.exit_interval
    }

    /// Upsampling stages of the tail as pixel-shuffle factors.
    pub fn upsample_factors(&self) -> Vec<usize> {
        match self.scale {
            3 => vec![3],
            4 => vec![2, 2],
            s => vec![s],
        }
    }
}
