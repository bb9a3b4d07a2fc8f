//! Diagnostic experiments: permutation rank spread, accuracy-vs-steps
//! curves, the randomized-head baseline and the inner-loop hyper-parameter
//! sweep, with CSV and SVG output.

mod curves;
mod spread;
pub mod svg;
mod sweep;

pub use curves::{randomized_head_baseline, steps_curve, write_curves_csv, StepsCurve};
pub use spread::{permutation_accuracies, permutation_spread, SpreadResult};
pub use sweep::{hyper_sweep, train_and_evaluate, SweepBudget, SweepResult};
