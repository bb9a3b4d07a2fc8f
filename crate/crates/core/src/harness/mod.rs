//! Command-line entry point, run configuration and result persistence.

mod cli;
mod commands;
mod config;
mod ledger;

pub use cli::{cli_dispatch, Cli, Command, Flags, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
pub use commands::MANIFEST_FILE;
pub use config::{
    AnalysisSection, DataSection, EvalSection, ModelSection, PathsSection, PretrainSection,
    RunConfig, TrainSection,
};
pub use ledger::{read_ledger, results_ledger_append, LedgerRow, LEDGER_SCHEMA_VERSION};
