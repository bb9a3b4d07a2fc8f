use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::maml::Variant;
use crate::metatest::Strategy;

use super::commands;
use super::config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "maml-lab",
    version,
    about = "Few-shot meta-learning experiments on synthetic class pools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pool split into base/validation/novel files.
    GenData(Flags),
    /// Pre-train an encoder with a classifier over all base classes.
    Pretrain(Flags),
    /// Meta-train on the base split.
    Train(Flags),
    /// Meta-test a checkpoint on the novel split.
    Eval(Flags),
    /// Rank-averaged accuracy over every head pairing.
    Spread(Flags),
    /// Query accuracy after each inner-loop step.
    Curve(Flags),
    /// Meta-train and evaluate over a grid of step sizes and step counts.
    Sweep(Flags),
    /// Learned heads against freshly drawn random heads.
    Baseline(Flags),
}

impl Command {
    pub fn flags(&self) -> &Flags {
        match self {
            Command::GenData(f)
            | Command::Pretrain(f)
            | Command::Train(f)
            | Command::Eval(f)
            | Command::Spread(f)
            | Command::Curve(f)
            | Command::Sweep(f)
            | Command::Baseline(f) => f,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    /// Inner-loop steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Inner-loop step size.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of test tasks.
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub freeze_encoder: bool,
    /// Directory holding splits.json.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Encoder checkpoint to start meta-training from.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Results ledger CSV to append evaluation rows to.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    /// Largest step count of a curve.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Meta-training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

impl Flags {
    /// Loads the config file, if any, and applies the flag overrides.
    pub fn effective_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if let Some(v) = self.variant {
            cfg.train.variant = v;
        }
        if let Some(s) = self.strategy {
            cfg.eval.strategy = s;
        }
        if let Some(m) = self.steps {
            cfg.train.steps = m;
        }
        if let Some(a) = self.alpha {
            cfg.train.alpha = a;
        }
        if let Some(t) = self.tasks {
            cfg.eval.tasks = t;
            cfg.analysis.spread_tasks = t;
            cfg.analysis.curve_tasks = t;
            cfg.analysis.sweep_eval_tasks = t;
        }
        if self.freeze_encoder {
            cfg.train.freeze_encoder = true;
        }
        if let Some(m) = self.max_steps {
            cfg.analysis.curve_max_steps = m;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        let paths = &mut cfg.paths;
        for (flag, slot) in [
            (&self.data, &mut paths.data),
            (&self.checkpoint, &mut paths.checkpoint),
            (&self.init, &mut paths.init),
            (&self.out, &mut paths.out),
            (&self.ledger, &mut paths.ledger),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        Ok(cfg)
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cfg = match cli.command.flags().effective_config() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    match commands::run(&cli.command, cfg) {
        Ok(()) => EXIT_OK,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
