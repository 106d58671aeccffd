//! Command implementations behind the `ape` binary.
//!
//! Every command takes a [`RunConfig`] and an output directory and writes
//! `resolved_config.txt` next to its artifacts.

mod commands;
mod config;

pub use commands::{
    cmd_eval, cmd_exitmap, cmd_flops, cmd_sr, cmd_sweep, cmd_train, run, Command, EVAL_CSV_HEADER,
    FLOPS_CSV_HEADER, RESOLVED_CONFIG,
};
pub use config::{desk_train_defaults, parse_assignment, parse_document, RunConfig, KEYS};
