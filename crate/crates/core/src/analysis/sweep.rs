use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episodes::{ClassPool, EpisodeSpec};
use crate::error::{Error, Result};
use crate::maml::{meta_train, InnerLoopConfig, TrainConfig, Variant};
use crate::metatest::{evaluate, EvalReport, EvalSettings, Strategy};
use crate::network::{Encoder, Heads, OptimizerConfig, ParamSet};

/// Training and evaluation budget shared by every sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepBudget {
    pub variant: Variant,
    pub layer_sizes: Vec<usize>,
    pub epochs: usize,
    pub tasks_per_epoch: usize,
    pub task_batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub eval_tasks: usize,
    /// Start every cell from this encoder instead of a fresh one.
    #[serde(skip)]
    pub init_encoder: Option<Encoder>,
}

impl Default for SweepBudget {
    fn default() -> Self {
        SweepBudget {
            variant: Variant::Vanilla,
            layer_sizes: vec![16, 32, 32],
            epochs: 30,
            tasks_per_epoch: 100,
            task_batch_size: 1,
            optimizer: OptimizerConfig::desk(),
            eval_tasks: 1000,
            init_encoder: None,
        }
    }
}

impl SweepBudget {
    /// Initial parameters for an `n_way` task under this budget's variant.
    pub fn init_params(&self, n_way: usize, seed: u64) -> Result<ParamSet> {
        let fresh = ParamSet::init(&self.layer_sizes, self.variant.head_mode(), n_way, seed)?;
        match &self.init_encoder {
            None => Ok(fresh),
            Some(enc) => {
                let heads = Heads::random(self.variant.head_mode(), n_way, enc.feature_dim(), seed);
                ParamSet::new(enc.clone(), heads)
            }
        }
    }
}

/// Meta-trains on `train_pool` with the given inner loop and evaluates the
/// result on `eval_pool` with the same inner loop (strategy `none`).
pub fn train_and_evaluate(
    train_pool: &ClassPool,
    eval_pool: &ClassPool,
    spec: &EpisodeSpec,
    inner: InnerLoopConfig,
    budget: &SweepBudget,
    seed: u64,
) -> Result<EvalReport> {
    let init = budget.init_params(spec.n_way, seed)?;
    let cfg = TrainConfig {
        variant: budget.variant,
        epochs: budget.epochs,
        tasks_per_epoch: budget.tasks_per_epoch,
        task_batch_size: budget.task_batch_size,
        spec: *spec,
        inner,
        optimizer: budget.optimizer,
        seed,
    };
    let (trained, _) = meta_train(train_pool, &cfg, &init)?;
    let settings = EvalSettings {
        spec: *spec,
        strategy: Strategy::None,
        inner,
        n_tasks: budget.eval_tasks,
        seed,
        sort_labels: budget.variant == Variant::Fo,
    };
    evaluate(&trained, eval_pool, &settings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub alphas: Vec<f64>,
    pub steps: Vec<usize>,
    /// `mean_acc[i][j]` for `alphas[i]`, `steps[j]`, percent.
    pub mean_acc: Vec<Vec<f64>>,
    pub ci95: Vec<Vec<f64>>,
    /// Index `(i, j)` of the best cell; ties go to the first in row-major order.
    pub best: (usize, usize),
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "steps", "mean_acc", "ci95"])?;
        for (i, a) in self.alphas.iter().enumerate() {
            for (j, m) in self.steps.iter().enumerate() {
                w.write_record([
                    a.to_string(),
                    m.to_string(),
                    self.mean_acc[i][j].to_string(),
                    self.ci95[i][j].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// One meta-trained model per `(alpha, steps)` cell, all with the same seed
/// so cells see the same task stream and initialization.
pub fn hyper_sweep(
    train_pool: &ClassPool,
    eval_pool: &ClassPool,
    spec: &EpisodeSpec,
    alphas: &[f64],
    steps: &[usize],
    budget: &SweepBudget,
    seed: u64,
) -> Result<SweepResult> {
    if alphas.is_empty() || steps.is_empty() {
        return Err(Error::invalid("sweep grids must be non-empty"));
    }
    let cells: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|i| (0..steps.len()).map(move |j| (i, j)))
        .collect();
    let reports = cells
        .par_iter()
        .map(|&(i, j)| {
            let inner = InnerLoopConfig::new(steps[j], alphas[i])?;
            train_and_evaluate(train_pool, eval_pool, spec, inner, budget, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean_acc = vec![vec![0.0; steps.len()]; alphas.len()];
    let mut ci95 = mean_acc.clone();
    let mut best = (0, 0);
    for (&(i, j), r) in cells.iter().zip(&reports) {
        mean_acc[i][j] = r.mean_acc;
        ci95[i][j] = r.ci95;
        if r.mean_acc > mean_acc[best.0][best.1] {
            best = (i, j);
        }
    }
    Ok(SweepResult {
        alphas: alphas.to_vec(),
        steps: steps.to_vec(),
        mean_acc,
        ci95,
        best,
    })
}
