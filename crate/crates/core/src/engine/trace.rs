use std::io::Write;

use crate::error::Result;
use crate::patchwork::PatchGrid;

/// What happened to one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTrace {
    /// LR (top, left).
    pub coord: (usize, usize),
    /// Exit (1-based) at which the patch left the network.
    pub exit_index: usize,
    /// Feature index the output was reconstructed from (0 = head output).
    pub output_exit: usize,
    /// Signal observed at every visited exit.
    pub signals: Vec<f64>,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitTrace {
    pub patches: Vec<PatchTrace>,
    pub num_exits: usize,
}

impl ExitTrace {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn total_macs(&self) -> u64 {
        self.patches.iter().map(|p| p.macs).sum()
    }

    pub fn mean_exit_depth(&self) -> f64 {
        if self.patches.is_empty() {
            return 0.0;
        }
        self.patches.iter().map(|p| p.exit_index as f64).sum::<f64>() / self.patches.len() as f64
    }

    pub fn mean_macs_per_patch(&self) -> f64 {
        if self.patches.is_empty() {
            return 0.0;
        }
        self.total_macs() as f64 / self.patches.len() as f64
    }

    /// Patch counts per exit; entry `j-1` counts exit `j`.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_exits];
        for p in &self.patches {
            h[p.exit_index - 1] += 1;
        }
        h
    }

    pub fn exit_indices(&self) -> Vec<usize> {
        self.patches.iter().map(|p| p.exit_index).collect()
    }
}

/// Per-pixel exit indices over the LR image. Where patches overlap, the
/// later patch in row-major order is shown, so every patch owns at least
/// its top-left pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitMap {
    pub height: usize,
    pub width: usize,
    pub num_exits: usize,
    pub indices: Vec<usize>,
}

pub fn exit_map(trace: &ExitTrace, grid: &PatchGrid) -> ExitMap {
    let (h, w) = grid.image_size;
    let mut indices = vec![0; h * w];
    for p in &trace.patches {
        let (t, l) = p.coord;
        for y in t..t + grid.patch_size {
            indices[y * w + l..y * w + l + grid.patch_size].fill(p.exit_index);
        }
    }
    ExitMap {
        height: h,
        width: w,
        num_exits: trace.num_exits,
        indices,
    }
}

impl ExitMap {
    /// Gray levels proportional to the exit index (the last exit is white).
    pub fn to_gray(&self) -> Vec<u8> {
        self.indices
            .iter()
            .map(|&j| ((j as f64 / self.num_exits as f64) * 255.0).round() as u8)
            .collect()
    }
}

/// `top,left,exit_index` rows, one per patch.
pub fn write_exit_csv(trace: &ExitTrace, mut w: impl Write) -> Result<()> {
    writeln!(w, "top,left,exit_index,output_exit,macs")?;
    for p in &trace.patches {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.coord.0, p.coord.1, p.exit_index, p.output_exit, p.macs
        )?;
    }
    Ok(())
}
