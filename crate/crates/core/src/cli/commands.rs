use std::fmt::{self, Write as _};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use crate::data::{train, Corpus, Split};
use crate::engine::{exit_map, super_resolve, sweep, write_exit_csv, write_sweep_csv};
use crate::error::{Error, Result};
use crate::imageio::{save_gray_png, PlanarImage};
use crate::metrics::{psnr, ssim, CostModel};
use crate::model::{load_checkpoint, save_checkpoint, MultiExitSr};
use crate::patchwork::PatchGrid;

pub const RESOLVED_CONFIG: &str = "resolved_config.txt";
pub const EVAL_CSV_HEADER: &str = "image,psnr_db,ssim,mean_exit_depth,mean_macs_per_patch";
pub const FLOPS_CSV_HEADER: &str = "exit,blocks,head,body,regressor,tail,total";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Sr,
    Sweep,
    Flops,
    Exitmap,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Sr => "sr",
            Command::Sweep => "sweep",
            Command::Flops => "flops",
            Command::Exitmap => "exitmap",
        })
    }
}

/// Dispatches `command`; returns the text to print on success.
pub fn run(command: Command, cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    if command == Command::Flops {
        return cmd_flops(cfg, out);
    }
    let out = out.ok_or_else(|| Error::config(format!("'{command}' needs an output directory")))?;
    match command {
        Command::Train => cmd_train(cfg, out),
        Command::Eval => cmd_eval(cfg, out),
        Command::Sr => cmd_sr(cfg, out),
        Command::Sweep => cmd_sweep(cfg, out),
        Command::Exitmap => cmd_exitmap(cfg, out),
        Command::Flops => unreachable!(),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::config(format!("missing required key '{key}'")))
}

fn prepare(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(RESOLVED_CONFIG), cfg.to_document())?;
    Ok(())
}

/// Loads the checkpoint and records its backbone in the echoed config.
fn load_model(cfg: &RunConfig) -> Result<(MultiExitSr, RunConfig)> {
    let model = load_checkpoint(required(&cfg.checkpoint, "checkpoint")?)?;
    let mut resolved = cfg.clone();
    resolved.model = *model.config();
    resolved.train.scale = model.config().scale;
    Ok((model, resolved))
}

fn open_corpus(cfg: &RunConfig, scale: usize, split: Split) -> Result<Corpus> {
    let dir = required(&cfg.corpus, "corpus")?;
    if !dir.is_dir() {
        return Err(Error::Data(format!(
            "corpus directory {} does not exist",
            dir.display()
        )));
    }
    Corpus::open(dir, scale, split)
}

/// Trains one stage. Starts from `checkpoint` when given, otherwise from a
/// fresh model seeded with `seed`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (mut model, resolved) = match cfg.checkpoint {
        Some(_) => load_model(cfg)?,
        None => (MultiExitSr::build(cfg.model, cfg.train.seed)?, cfg.clone()),
    };
    let corpus = open_corpus(&resolved, resolved.model.scale, Split::Train)?;
    prepare(out, &resolved)?;
    let report = train(&mut model, &corpus, &resolved.train, |_| {})?;
    save_checkpoint(&model, out.join("model.ckpt"))?;
    report.write_csv(BufWriter::new(fs::File::create(out.join("train_log.csv"))?))?;
    let last = report.log.last().copied();
    Ok(format!(
        "stage {}: {} steps on {} images, final L_m {:.5}, L_ic {:.5}",
        resolved.train.stage,
        report.log.len(),
        corpus.len(),
        last.map_or(f64::NAN, |s| s.l_m),
        last.map_or(f64::NAN, |s| s.l_ic),
    ))
}

/// Per-image and mean PSNR/SSIM at the configured threshold.
pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (model, resolved) = load_model(cfg)?;
    let corpus = open_corpus(&resolved, resolved.model.scale, Split::Val)?;
    prepare(out, &resolved)?;
    let mut csv = format!("{EVAL_CSV_HEADER}\n");
    let mut sums = [0.0; 4];
    for pair in &corpus.pairs {
        let (sr, trace) = super_resolve(
            &model,
            &pair.lr,
            &resolved.policy,
            &resolved.inference,
            Some(&pair.hr),
        )?;
        let sr = sr.quantized();
        let row = [
            psnr(&sr, &pair.hr)?,
            ssim(&sr, &pair.hr)?,
            trace.mean_exit_depth(),
            trace.mean_macs_per_patch(),
        ];
        let _ = writeln!(csv, "{},{},{},{},{}", pair.name, row[0], row[1], row[2], row[3]);
        sums.iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    let n = corpus.len() as f64;
    let mean = sums.map(|s| s / n);
    let _ = writeln!(csv, "mean,{},{},{},{}", mean[0], mean[1], mean[2], mean[3]);
    fs::write(out.join("eval.csv"), csv)?;
    Ok(format!(
        "{} images at threshold {}: PSNR {:.4} dB, SSIM {:.5}, mean exit depth {:.3}",
        corpus.len(),
        resolved.policy.threshold,
        mean[0],
        mean[1],
        mean[2]
    ))
}

fn super_resolve_file(cfg: &RunConfig, out: &Path, with_map: bool) -> Result<String> {
    let (model, resolved) = load_model(cfg)?;
    let input = required(&cfg.input, "input")?;
    let lr = PlanarImage::load_png(input)?;
    let hr = cfg.hr.as_deref().map(PlanarImage::load_png).transpose()?;
    prepare(out, &resolved)?;
    let (sr, trace) = super_resolve(&model, &lr, &resolved.policy, &resolved.inference, hr.as_ref())?;
    sr.save_png(out.join("sr.png"))?;
    if with_map {
        let o = &resolved.inference;
        let grid = PatchGrid::new(
            lr.height(),
            lr.width(),
            o.patch_size,
            o.stride,
            model.config().scale,
        )?;
        let map = exit_map(&trace, &grid);
        save_gray_png(out.join("exit_map.png"), map.height, map.width, &map.to_gray())?;
        write_exit_csv(
            &trace,
            BufWriter::new(fs::File::create(out.join("exit_map.csv"))?),
        )?;
    }
    Ok(format!(
        "{}x{} -> {}x{}, {} patches, mean exit depth {:.3}, {} MACs",
        lr.width(),
        lr.height(),
        sr.width(),
        sr.height(),
        trace.len(),
        trace.mean_exit_depth(),
        trace.total_macs()
    ))
}

/// Enlarges `input`; writes the exit map too when `exit_map = true`.
pub fn cmd_sr(cfg: &RunConfig, out: &Path) -> Result<String> {
    super_resolve_file(cfg, out, cfg.exit_map)
}

/// Like `sr`, always writing the exit map PNG and CSV.
pub fn cmd_exitmap(cfg: &RunConfig, out: &Path) -> Result<String> {
    super_resolve_file(cfg, out, true)
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (model, resolved) = load_model(cfg)?;
    let corpus = open_corpus(&resolved, resolved.model.scale, Split::Val)?;
    prepare(out, &resolved)?;
    let points = sweep(
        &model,
        &corpus,
        &resolved.thresholds,
        &resolved.policy,
        &resolved.inference,
    )?;
    write_sweep_csv(&points, BufWriter::new(fs::File::create(out.join("sweep.csv"))?))?;
    let mut s = String::new();
    for p in &points {
        let _ = writeln!(
            s,
            "tau {:>6.3}  depth {:.3}  MACs/patch {:.4e}  PSNR {:.4}  SSIM {:.5}",
            p.threshold, p.mean_exit_depth, p.mean_macs_per_patch, p.psnr_db, p.ssim
        );
    }
    Ok(s.trim_end().to_string())
}

/// Cumulative MACs per exit for a `patch_size` square LR patch.
pub fn cmd_flops(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    let resolved = match cfg.checkpoint {
        Some(_) => load_model(cfg)?.1,
        None => cfg.clone(),
    };
    let m = &resolved.model;
    let p = resolved.inference.patch_size;
    let cost = CostModel::new(m, p, p);
    let mut csv = format!("{FLOPS_CSV_HEADER}\n");
    let mut table = format!(
        "{} x{} C{} N{} k{}, {p}x{p} patch\n{:>4} {:>6} {:>14} {:>16} {:>10} {:>14} {:>16}\n",
        m.preset,
        m.scale,
        m.channels,
        m.num_blocks,
        m.exit_interval,
        "exit",
        "blocks",
        "head",
        "body",
        "regressor",
        "tail",
        "total"
    );
    for r in &cost.rows {
        let blocks = r.exit * m.exit_interval;
        let _ = writeln!(
            csv,
            "{},{blocks},{},{},{},{},{}",
            r.exit,
            r.head,
            r.body,
            r.regressor,
            r.tail,
            r.total()
        );
        let _ = writeln!(
            table,
            "{:>4} {blocks:>6} {:>14} {:>16} {:>10} {:>14} {:>16}",
            r.exit,
            r.head,
            r.body,
            r.regressor,
            r.tail,
            r.total()
        );
    }
    let deep = cost.deepest();
    let _ = write!(table, "deepest body: {:.2}G MACs", deep.body as f64 / 1e9);
    if let Some(out) = out {
        prepare(out, &resolved)?;
        fs::write(out.join("flops.csv"), csv)?;
    }
    Ok(table)
}
