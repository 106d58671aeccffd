use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ape::cli::{run, Command, RunConfig};

/// Adaptive patch-exiting super-resolution.
#[derive(Parser)]
#[command(name = "ape", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one stage (base, multiexit or joint) and write a checkpoint.
    Train(Common),
    /// Per-image and mean PSNR/SSIM over a corpus at one threshold.
    Eval(Common),
    /// Super-resolve a single PNG.
    Sr(Common),
    /// Threshold sweep over a corpus.
    Sweep(Common),
    /// Print the per-exit MAC table.
    Flops(Common),
    /// Super-resolve a PNG and write its exit map.
    Exitmap(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 is the reproducibility mode.
    #[arg(long)]
    threads: Option<usize>,
}

fn exit_code(e: &ape::Error) -> u8 {
    match e {
        ape::Error::Config(_) => 2,
        ape::Error::Data(_) => 3,
        ape::Error::Checkpoint(_) => 4,
        ape::Error::Io(_) | ape::Error::Image(_) => 5,
        ape::Error::Shape(_) | ape::Error::Inference(_) => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Eval(a) => (Command::Eval, a),
        Cmd::Sr(a) => (Command::Sr, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Flops(a) => (Command::Flops, a),
        Cmd::Exitmap(a) => (Command::Exitmap, a),
    };
    let result = RunConfig::load(args.config.as_deref(), &args.set).and_then(|mut cfg| {
        if let Some(t) = args.threads {
            cfg.threads = t;
        }
        if cfg.threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build_global()
                .map_err(|e| ape::Error::Config(format!("thread pool: {e}")))?;
        }
        run(command, &cfg, args.out.as_deref())
    });
    match result {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
