use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inner::{
    fo_meta_grad, select_permutation_min_support_loss, unicorn_meta_grad, InnerLoopConfig, MetaGrad,
};
use crate::episodes::{sample_episode, ClassPool, Episode, EpisodeSpec, MAX_ENUMERATION};
use crate::error::{Error, Result};
use crate::network::{GradSet, HeadMode, OptimizerConfig, OuterOptimizer, ParamSet};
use crate::seed::{self, Phase};

/// Meta-training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Random label assignment per task.
    Vanilla,
    /// Labels follow the sorted global class ids.
    Fo,
    /// Labels follow the permutation with the smallest initial support loss.
    Pm,
    /// Single shared head, duplicated per class in the inner loop.
    Unicorn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Fo => "fo",
            Variant::Pm => "pm",
            Variant::Unicorn => "unicorn",
        }
    }

    pub fn head_mode(self) -> HeadMode {
        match self {
            Variant::Unicorn => HeadMode::Shared,
            _ => HeadMode::PerClass,
        }
    }

    /// Relabels a freshly sampled episode the way this variant sees it.
    pub fn prepare(self, params: &ParamSet, episode: Episode) -> Result<Episode> {
        match self {
            Variant::Vanilla | Variant::Unicorn => Ok(episode),
            Variant::Fo => Ok(episode.sorted_by_class_id()),
            Variant::Pm => {
                let pi = select_permutation_min_support_loss(params, &episode)?;
                episode.permuted(&pi)
            }
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "fo" => Ok(Variant::Fo),
            "pm" => Ok(Variant::Pm),
            "unicorn" => Ok(Variant::Unicorn),
            other => Err(Error::invalid(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub tasks_per_epoch: usize,
    pub task_batch_size: usize,
    pub spec: EpisodeSpec,
    pub inner: InnerLoopConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Vanilla,
            epochs: 30,
            tasks_per_epoch: 100,
            task_batch_size: 1,
            spec: EpisodeSpec::default(),
            inner: InnerLoopConfig::default(),
            optimizer: OptimizerConfig::desk(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.inner.validate()?;
        self.optimizer.validate()?;
        if self.tasks_per_epoch == 0 || self.task_batch_size == 0 {
            return Err(Error::invalid(
                "tasks_per_epoch and task_batch_size must be positive",
            ));
        }
        if self.variant == Variant::Pm && self.spec.n_way > MAX_ENUMERATION {
            return Err(Error::capacity(
                "permutation-matched training needs n_way <= 8",
            ));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over the epoch's tasks of the summed query loss.
    pub mean_query_loss: f64,
    pub mean_query_acc: f64,
    pub lr_encoder: f64,
    pub lr_heads: f64,
    pub wall_ms: u128,
}

pub fn write_train_log<W: Write>(rows: &[EpochLog], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Meta-gradient of the task with global index `task_index`.
pub fn task_meta_grad(
    pool: &ClassPool,
    cfg: &TrainConfig,
    params: &ParamSet,
    task_index: u64,
) -> Result<MetaGrad> {
    let episode = sample_episode(
        pool,
        &cfg.spec,
        seed::derive(cfg.seed, Phase::Train, task_index),
    )?;
    let episode = cfg.variant.prepare(params, episode)?;
    match cfg.variant {
        Variant::Unicorn => unicorn_meta_grad(params, &episode, &cfg.inner),
        _ => fo_meta_grad(params, &episode, &cfg.inner),
    }
}

/// Meta-trains `init` on episodes drawn from `pool`.
///
/// Each epoch draws `tasks_per_epoch` episodes; every batch of
/// `task_batch_size` tasks is evaluated against the same snapshot, their
/// gradients are averaged in task order and one outer step is applied.
pub fn meta_train(
    pool: &ClassPool,
    cfg: &TrainConfig,
    init: &ParamSet,
) -> Result<(ParamSet, Vec<EpochLog>)> {
    cfg.validate()?;
    if init.heads.mode() != cfg.variant.head_mode() {
        return Err(Error::state(format!(
            "variant {} needs {:?} heads, got {:?}",
            cfg.variant.name(),
            cfg.variant.head_mode(),
            init.heads.mode()
        )));
    }
    if let (HeadMode::PerClass, n) = (init.heads.mode(), init.heads.count()) {
        if n != cfg.spec.n_way {
            return Err(Error::invalid(format!(
                "model has {n} heads, tasks are {}-way",
                cfg.spec.n_way
            )));
        }
    }
    let mut params = init.clone();
    let mut opt = OuterOptimizer::new(cfg.optimizer, &params)?;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;
        let first_task = (epoch * cfg.tasks_per_epoch) as u64;
        let mut t = 0;
        while t < cfg.tasks_per_epoch {
            let end = (t + cfg.task_batch_size).min(cfg.tasks_per_epoch);
            let snapshot = &params;
            let results = (t..end)
                .into_par_iter()
                .map(|i| task_meta_grad(pool, cfg, snapshot, first_task + i as u64))
                .collect::<Result<Vec<_>>>()?;
            let grads: Vec<GradSet> = results.iter().map(|r| r.grad.clone()).collect();
            for r in &results {
                loss_sum += r.query_loss;
                acc_sum += r.query_acc;
            }
            let mean = GradSet::mean(&grads)?;
            opt.step(&mut params, &mean, epoch)?;
            t = end;
        }
        let (lr_encoder, lr_heads) = cfg.optimizer.rates_at(epoch);
        log.push(EpochLog {
            epoch,
            mean_query_loss: loss_sum / cfg.tasks_per_epoch as f64,
            mean_query_acc: acc_sum / cfg.tasks_per_epoch as f64,
            lr_encoder,
            lr_heads,
            wall_ms: started.elapsed().as_millis(),
        });
    }
    Ok((params, log))
}
