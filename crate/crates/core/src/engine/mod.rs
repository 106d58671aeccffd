//! Threshold-driven adaptive inference over image patches.
//!
//! Patches advance exit by exit in groups. At every exit each active patch
//! gets a signal (predicted or measured incremental capacity); patches whose
//! signal falls below the threshold retire and the group shrinks. Retired
//! patches are reconstructed by the shared tail and merged.

mod policy;
mod run;
mod sweep;
mod trace;

pub use policy::{ExitOutput, ExitPolicy, SignalSource};
pub use run::{run_patches, super_resolve, InferenceOptions};
pub use sweep::{evaluate, sweep, write_sweep_csv, TradeoffPoint};
pub use trace::{exit_map, write_exit_csv, ExitMap, ExitTrace, PatchTrace};
