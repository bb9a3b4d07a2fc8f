use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episodes::{sample_episode, ClassPool, EpisodeSpec};
use crate::error::{Error, Result};
use crate::maml::InnerLoopConfig;
use crate::metatest::{adapt_and_score, mean_and_ci95};
use crate::network::{HeadMode, Heads, ParamSet};
use crate::seed::{self, Phase};

/// Mean query accuracy (percent) after each inner-loop step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsCurve {
    pub acc_at_step: Vec<f64>,
    /// 95% interval half-width at each step, percent.
    pub ci95_at_step: Vec<f64>,
    pub freeze_encoder: bool,
}

impl StepsCurve {
    pub fn last(&self) -> f64 {
        *self.acc_at_step.last().expect("curve has step 0")
    }
}

/// Accuracy-vs-steps curve averaged over `n_tasks` episodes. Shared heads
/// are duplicated per task.
#[allow(clippy::too_many_arguments)]
pub fn steps_curve(
    params: &ParamSet,
    pool: &ClassPool,
    spec: &EpisodeSpec,
    alpha: f64,
    max_steps: usize,
    freeze_encoder: bool,
    n_tasks: usize,
    seed: u64,
) -> Result<StepsCurve> {
    if n_tasks == 0 {
        return Err(Error::invalid("curve needs at least one task"));
    }
    let cfg = InnerLoopConfig {
        steps: max_steps,
        alpha,
        freeze_encoder,
    };
    cfg.validate()?;
    let params = params.expand_for(spec.n_way)?;
    let traces = (0..n_tasks)
        .into_par_iter()
        .map(|i| {
            let episode = sample_episode(pool, spec, seed::derive(seed, Phase::Eval, i as u64))?;
            Ok(adapt_and_score(&params, &episode, &cfg)?.query_trace)
        })
        .collect::<Result<Vec<_>>>()?;
    let (acc_at_step, ci95_at_step) = (0..=max_steps)
        .map(|step| {
            let column: Vec<f64> = traces.iter().map(|t| t[step]).collect();
            mean_and_ci95(&column)
        })
        .unzip();
    Ok(StepsCurve {
        acc_at_step,
        ci95_at_step,
        freeze_encoder,
    })
}

/// Writes `step,<name>_acc,<name>_ci95,...` rows for curves of equal length.
pub fn write_curves_csv<W: Write>(curves: &[(&str, &StepsCurve)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["step".to_string()];
    for (name, _) in curves {
        head.push(format!("{name}_acc"));
        head.push(format!("{name}_ci95"));
    }
    w.write_record(&head)?;
    let len = curves.first().map_or(0, |c| c.1.acc_at_step.len());
    for step in 0..len {
        let mut row = vec![step.to_string()];
        for (_, c) in curves {
            row.push(c.acc_at_step[step].to_string());
            row.push(c.ci95_at_step[step].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Curves of the learned heads and of freshly drawn random heads on the
/// same tasks; the encoder is shared.
pub fn randomized_head_baseline(
    params: &ParamSet,
    pool: &ClassPool,
    spec: &EpisodeSpec,
    cfg: &InnerLoopConfig,
    n_tasks: usize,
    seed: u64,
) -> Result<(StepsCurve, StepsCurve)> {
    if !matches!(params.heads, Heads::PerClass(_)) {
        return Err(Error::state(
            "randomized-head baseline needs per-class heads",
        ));
    }
    let curve = |p: &ParamSet| {
        steps_curve(
            p,
            pool,
            spec,
            cfg.alpha,
            cfg.steps,
            cfg.freeze_encoder,
            n_tasks,
            seed,
        )
    };
    let learned = curve(params)?;
    let head_seed = seed::derive(seed, Phase::Baseline, 0);
    let random = ParamSet::new(
        params.encoder.clone(),
        Heads::random(
            HeadMode::PerClass,
            params.heads.count(),
            params.feature_dim(),
            head_seed,
        ),
    )?;
    let randomized = curve(&random)?;
    Ok((learned, randomized))
}
