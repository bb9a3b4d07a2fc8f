//! Meta-test treatments and accuracy reports with 95% confidence intervals.

mod report;
mod strategy;

pub use report::{evaluate, mean_and_ci95, EvalReport, EvalSettings, Z95};
pub use strategy::{
    adapt_and_score, ensemble_probabilities, run_strategy, AdaptTrace, Strategy, StrategyOutcome,
};
