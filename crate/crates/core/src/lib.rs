//! A desk-scale laboratory for first-order MAML on few-shot classification.
//!
//! The crate is organised around the life cycle of an experiment:
//!
//! * [`episodes`] builds class pools, samples N-way K-shot episodes and owns
//!   all permutation combinatorics (class-label assignments).
//! * [`network`] is the MLP encoder with per-class (or one shared) linear
//!   heads, its analytic backward pass, the outer-loop optimizer and the
//!   checkpoint format.
//! * [`maml`] implements the inner loop, first-order meta-gradients and the
//!   meta-training variants (vanilla, fixed-order, permutation-matched and
//!   unicorn).
//! * [`metatest`] runs meta-test treatments and aggregates accuracies with
//!   95% confidence intervals.
//! * [`analysis`] hosts the diagnostic experiments (step sweeps, accuracy
//!   curves, permutation rank spread, randomized-head baseline).
//! * [`harness`] wires everything to the `maml-lab` command line.

pub mod analysis;
mod binio;
pub mod episodes;
pub mod error;
pub mod harness;
pub mod maml;
pub mod metatest;
pub mod network;
pub mod seed;

pub use error::{Error, Result};
