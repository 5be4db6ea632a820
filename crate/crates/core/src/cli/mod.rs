//! Run configuration and the subcommands behind the `perifuse` binary.

mod commands;
mod config;

pub use commands::{
    cmd_eval, cmd_extract, cmd_fuse, cmd_ingest, cmd_prepare, cmd_run_experiment, cmd_score, cmd_simulate,
    EvalOutputs, PrepareSidecar, PrepareSummary, WorkDir,
};
pub use config::{ExternalScores, FusionConfig, Overrides, PathsConfig, RunConfig, CONFIG_VERSION};
