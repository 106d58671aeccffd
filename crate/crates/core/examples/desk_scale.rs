//! Trains the tiny preset on the bundled test corpus, one `train` call per
//! stage, and prints validation numbers after each stage.
//!
//! cargo run --release --example desk_scale -- [stage[:steps[:lr]] ...] [lambda=X] [load=PATH] [save=PATH]
//!
//! Stages use the CLI's desk defaults unless overridden. Without stage
//! arguments the acceptance recipe runs: base, multiexit, joint.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ape::cli::desk_train_defaults;
use ape::data::{train, validate, Corpus, Split, TrainConfig};
use ape::model::{load_checkpoint, save_checkpoint, BackboneConfig, MultiExitSr, Stage};

fn main() -> ape::Result<()> {
    let mut schedule: Vec<TrainConfig> = Vec::new();
    let mut lambda: Option<f64> = None;
    let (mut load, mut save): (Option<PathBuf>, Option<PathBuf>) = (None, None);
    for arg in std::env::args().skip(1) {
        if let Some((k, v)) = arg.split_once('=') {
            match k {
                "lambda" => lambda = Some(v.parse().expect("lambda")),
                "load" => load = Some(v.into()),
                "save" => save = Some(v.into()),
                _ => panic!("unknown option {k}"),
            }
            continue;
        }
        let mut parts = arg.split(':');
        let mut cfg = desk_train_defaults(parts.next().unwrap().parse()?);
        if let Some(steps) = parts.next() {
            cfg.steps_per_epoch = steps.parse::<usize>().expect("steps") / cfg.epochs;
        }
        if let Some(lr) = parts.next() {
            cfg.lr = lr.parse().expect("lr");
        }
        schedule.push(cfg);
    }
    if schedule.is_empty() {
        schedule = [Stage::Base, Stage::MultiExit, Stage::Joint]
            .into_iter()
            .map(desk_train_defaults)
            .collect();
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/corpus");
    let train_set = Corpus::open(&root.join("train"), 2, Split::Train)?;
    let val_set = Corpus::open(&root.join("val"), 2, Split::Val)?;
    let mut model = match &load {
        Some(path) => load_checkpoint(path)?,
        None => MultiExitSr::build(BackboneConfig::tiny(2), 1)?,
    };
    for mut cfg in schedule {
        if let (Stage::Joint, Some(l)) = (cfg.stage, lambda) {
            cfg.lambda = l;
        }
        let t = Instant::now();
        let every = (cfg.steps_per_epoch * cfg.epochs / 6).max(1);
        let (mut lm, mut ic, mut n) = (0.0, 0.0, 0);
        let report = train(&mut model, &train_set, &cfg, |s| {
            lm += s.l_m;
            ic += s.l_ic;
            n += 1;
            if n == every {
                println!(
                    "  {} step {:>5} L_m {:.4} L_ic {:.4} lr {:.1e}",
                    cfg.stage,
                    s.step + 1,
                    lm / n as f64,
                    ic / n as f64,
                    s.lr
                );
                (lm, ic, n) = (0.0, 0.0, 0);
            }
        })?;
        let v = validate(&model, &val_set, 24)?;
        println!(
            "{} {} steps at lr {:.1e} ({:.0}s): val {:.3} dB (bicubic {:.3}), regressor mse {:.4} / {:.4}",
            cfg.stage,
            report.log.len(),
            cfg.lr,
            t.elapsed().as_secs_f64(),
            v.deepest_psnr,
            v.bicubic_psnr,
            v.regressor_mse,
            v.zero_predictor_mse
        );
    }
    if let Some(path) = save {
        save_checkpoint(&model, path)?;
    }
    Ok(())
}
