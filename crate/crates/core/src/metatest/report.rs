use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::strategy::{run_strategy, Strategy};
use crate::episodes::{sample_episode, ClassPool, EpisodeSpec};
use crate::error::{Error, Result};
use crate::maml::InnerLoopConfig;
use crate::network::ParamSet;
use crate::seed::{self, Phase};

/// Normal quantile used for the two-sided 95% interval.
pub const Z95: f64 = 1.96;

/// Aggregated meta-test result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: Strategy,
    pub per_task_acc: Vec<f64>,
    /// Percent.
    pub mean_acc: f64,
    /// Half-width of the 95% interval, percent.
    pub ci95: f64,
    pub task_count: usize,
    pub steps: usize,
    pub seed: u64,
}

/// `(mean, ci95)` in percent: `100 * mean` and `100 * 1.96 * s / sqrt(T)`
/// with the sample standard deviation `s` (T - 1 denominator). A single
/// task has no spread estimate and reports a zero interval.
pub fn mean_and_ci95(per_task_acc: &[f64]) -> (f64, f64) {
    let t = per_task_acc.len();
    if t == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = per_task_acc.iter().sum::<f64>() / t as f64;
    if t == 1 {
        return (100.0 * mean, 0.0);
    }
    let var = per_task_acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
    (100.0 * mean, 100.0 * Z95 * var.sqrt() / (t as f64).sqrt())
}

impl EvalReport {
    pub fn from_accuracies(
        per_task_acc: Vec<f64>,
        strategy: Strategy,
        steps: usize,
        seed: u64,
    ) -> Self {
        let (mean_acc, ci95) = mean_and_ci95(&per_task_acc);
        EvalReport {
            strategy,
            task_count: per_task_acc.len(),
            per_task_acc,
            mean_acc,
            ci95,
            steps,
            seed,
        }
    }
}

/// Meta-test protocol settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub spec: EpisodeSpec,
    pub strategy: Strategy,
    pub inner: InnerLoopConfig,
    pub n_tasks: usize,
    pub seed: u64,
    /// Label classes by ascending global id instead of at random.
    #[serde(default)]
    pub sort_labels: bool,
}

/// Samples `n_tasks` episodes from `pool` and applies the strategy to each.
///
/// Task `i` uses the seed derived from `(seed, i)`, and results are gathered
/// in task order, so the report does not depend on the worker count.
pub fn evaluate(
    params: &ParamSet,
    pool: &ClassPool,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    if settings.n_tasks == 0 {
        return Err(Error::invalid("evaluation needs at least one task"));
    }
    settings.spec.validate()?;
    settings.inner.validate()?;
    settings.strategy.check(settings.spec.n_way)?;
    let accs = (0..settings.n_tasks)
        .into_par_iter()
        .map(|i| {
            let task_seed = seed::derive(settings.seed, Phase::Eval, i as u64);
            let mut episode = sample_episode(pool, &settings.spec, task_seed)?;
            if settings.sort_labels {
                episode = episode.sorted_by_class_id();
            }
            Ok(run_strategy(params, &episode, settings.strategy, &settings.inner)?.accuracy)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EvalReport::from_accuracies(
        accs,
        settings.strategy,
        settings.inner.steps,
        settings.seed,
    ))
}
