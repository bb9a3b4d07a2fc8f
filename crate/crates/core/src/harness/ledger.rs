use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metatest::EvalReport;

pub const LEDGER_SCHEMA_VERSION: u32 = 1;

/// One row of the results ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub schema_version: u32,
    pub strategy: String,
    pub n_tasks: usize,
    pub mean_acc: f64,
    pub ci95: f64,
    pub steps: usize,
    pub seed: u64,
}

impl From<&EvalReport> for LedgerRow {
    fn from(r: &EvalReport) -> Self {
        LedgerRow {
            schema_version: LEDGER_SCHEMA_VERSION,
            strategy: r.strategy.name().to_string(),
            n_tasks: r.task_count,
            mean_acc: r.mean_acc,
            ci95: r.ci95,
            steps: r.steps,
            seed: r.seed,
        }
    }
}

/// Appends one row; a missing ledger is created with a header first.
pub fn results_ledger_append(path: &Path, report: &EvalReport) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);
    w.serialize(LedgerRow::from(report))?;
    w.flush()?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
