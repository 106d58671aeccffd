use crate::model::BackboneConfig;

/// Multiply-accumulates of a stride-1 same-size convolution; bias adds are
/// not counted.
pub fn conv_macs(k: usize, cin: usize, cout: usize, h_out: usize, w_out: usize) -> u64 {
    (k * k * cin * cout) as u64 * (h_out * w_out) as u64
}

/// Cumulative cost of producing an output at one exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostRow {
    pub exit: usize,
    pub head: u64,
    /// Two convolutions per block through this exit; skip adds excluded.
    pub body: u64,
    /// Pooling plus fully-connected unit, once per visited exit.
    pub regressor: u64,
    pub tail: u64,
}

impl CostRow {
    pub fn total(&self) -> u64 {
        self.head + self.body + self.regressor + self.tail
    }
}

pub fn head_macs(cfg: &BackboneConfig, h: usize, w: usize) -> u64 {
    conv_macs(3, 3, cfg.channels, h, w)
}

pub fn block_macs(cfg: &BackboneConfig, h: usize, w: usize) -> u64 {
    2 * conv_macs(3, cfg.channels, cfg.channels, h, w)
}

pub fn regressor_macs(cfg: &BackboneConfig, h: usize, w: usize) -> u64 {
    (cfg.channels * h * w + cfg.channels) as u64
}

pub fn tail_macs(cfg: &BackboneConfig, h: usize, w: usize) -> u64 {
    let c = cfg.channels;
    let (mut sh, mut sw) = (h, w);
    let mut total = 0;
    for r in cfg.upsample_factors() {
        total += conv_macs(3, c, c * r * r, sh, sw);
        sh *= r;
        sw *= r;
    }
    total + conv_macs(3, c, 3, sh, sw)
}

/// Cost of an output at `exit` (0 = head feature straight into the tail)
/// for an `h × w` LR patch.
pub fn mac_count(cfg: &BackboneConfig, h: usize, w: usize, exit: usize) -> CostRow {
    CostRow {
        exit,
        head: head_macs(cfg, h, w),
        body: cfg.exit_depth(exit) as u64 * block_macs(cfg, h, w),
        regressor: exit as u64 * regressor_macs(cfg, h, w),
        tail: tail_macs(cfg, h, w),
    }
}

/// Per-exit cumulative cost table for one patch size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostModel {
    pub patch_h: usize,
    pub patch_w: usize,
    /// Rows for exits `0..=E`.
    pub rows: Vec<CostRow>,
}

impl CostModel {
    pub fn new(cfg: &BackboneConfig, h: usize, w: usize) -> Self {
        CostModel {
            patch_h: h,
            patch_w: w,
            rows: (0..=cfg.num_exits()).map(|j| mac_count(cfg, h, w, j)).collect(),
        }
    }

    pub fn row(&self, exit: usize) -> &CostRow {
        &self.rows[exit]
    }

    pub fn deepest(&self) -> &CostRow {
        self.rows.last().expect("at least exit 0")
    }
}
