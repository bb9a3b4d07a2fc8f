use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::episodes::{
    enumerate_permutations, rotated_permutations, Episode, Permutation, MAX_ENUMERATION,
};
use crate::error::{Error, Result};
use crate::maml::{inner_step, InnerLoopConfig};
use crate::network::{accuracy, batch_loss, forward_logits, predict, softmax, Heads, ParamSet};

/// Meta-test treatment applied to every task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Adapt the initialization as-is.
    None,
    /// Pick the head pairing with the highest support accuracy before adaptation.
    InitSupportAcc,
    /// Pick the head pairing with the lowest support loss before adaptation.
    InitSupportLoss,
    /// Adapt every pairing, keep the one with the highest adapted support accuracy.
    UpdatedSupportAcc,
    /// Adapt every pairing, keep the one with the lowest adapted support loss.
    UpdatedSupportLoss,
    /// Average query probabilities of the models adapted from all N! pairings.
    EnsembleFull,
    /// Same, over the N rotations only.
    EnsembleRotated,
    /// Replace every head by the mean head, then adapt.
    AveragedInit,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::None,
        Strategy::InitSupportAcc,
        Strategy::InitSupportLoss,
        Strategy::UpdatedSupportAcc,
        Strategy::UpdatedSupportLoss,
        Strategy::EnsembleFull,
        Strategy::EnsembleRotated,
        Strategy::AveragedInit,
    ];

    /// Short command-line name.
    pub fn cli_name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::InitSupportAcc => "init-acc",
            Strategy::InitSupportLoss => "init-loss",
            Strategy::UpdatedSupportAcc => "upd-acc",
            Strategy::UpdatedSupportLoss => "upd-loss",
            Strategy::EnsembleFull => "ens-full",
            Strategy::EnsembleRotated => "ens-rot",
            Strategy::AveragedInit => "avg-init",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::InitSupportAcc => "init_support_acc",
            Strategy::InitSupportLoss => "init_support_loss",
            Strategy::UpdatedSupportAcc => "updated_support_acc",
            Strategy::UpdatedSupportLoss => "updated_support_loss",
            Strategy::EnsembleFull => "ensemble_full",
            Strategy::EnsembleRotated => "ensemble_rotated",
            Strategy::AveragedInit => "averaged_init",
        }
    }

    fn needs_enumeration(self) -> bool {
        matches!(
            self,
            Strategy::InitSupportAcc
                | Strategy::InitSupportLoss
                | Strategy::UpdatedSupportAcc
                | Strategy::UpdatedSupportLoss
                | Strategy::EnsembleFull
        )
    }

    pub fn check(self, n_way: usize) -> Result<()> {
        if self.needs_enumeration() && n_way > MAX_ENUMERATION {
            return Err(Error::capacity(format!(
                "strategy {} enumerates {n_way}! pairings (limit n_way <= {MAX_ENUMERATION})",
                self.name()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.cli_name() == s || k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown strategy {s:?}")))
    }
}

/// Accuracy trajectory of one adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptTrace {
    pub query_acc: f64,
    /// Support accuracy after each step; index 0 is the initialization.
    pub support_trace: Vec<f64>,
    pub query_trace: Vec<f64>,
    pub adapted: ParamSet,
}

/// Runs the inner loop while recording support and query accuracy after
/// every step (step 0 included).
pub fn adapt_and_score(
    params: &ParamSet,
    episode: &Episode,
    cfg: &InnerLoopConfig,
) -> Result<AdaptTrace> {
    if matches!(params.heads, Heads::Shared(_)) {
        return Err(Error::state("adapt_and_score needs per-class heads"));
    }
    cfg.validate()?;
    let mut adapted = params.clone();
    let mut support_trace = Vec::with_capacity(cfg.steps + 1);
    let mut query_trace = Vec::with_capacity(cfg.steps + 1);
    support_trace.push(accuracy(&adapted, &episode.support)?);
    query_trace.push(accuracy(&adapted, &episode.query)?);
    for _ in 0..cfg.steps {
        inner_step(&mut adapted, &episode.support, cfg)?;
        support_trace.push(accuracy(&adapted, &episode.support)?);
        query_trace.push(accuracy(&adapted, &episode.query)?);
    }
    Ok(AdaptTrace {
        query_acc: *query_trace.last().expect("step 0 recorded"),
        support_trace,
        query_trace,
        adapted,
    })
}

/// Adapted model's query outputs.
fn adapt(params: &ParamSet, episode: &Episode, cfg: &InnerLoopConfig) -> Result<ParamSet> {
    let mut adapted = params.clone();
    for _ in 0..cfg.steps {
        inner_step(&mut adapted, &episode.support, cfg)?;
    }
    Ok(adapted)
}

/// Query predictions (1-based labels) and accuracy of one treated task.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    /// Head pairing chosen by a selection strategy.
    pub chosen: Option<Permutation>,
}

fn score(
    predictions: Vec<usize>,
    episode: &Episode,
    chosen: Option<Permutation>,
) -> StrategyOutcome {
    let correct = predictions
        .iter()
        .zip(&episode.query)
        .filter(|(p, s)| **p == s.label)
        .count();
    StrategyOutcome {
        accuracy: correct as f64 / episode.query.len() as f64,
        predictions,
        chosen,
    }
}

fn predictions(params: &ParamSet, episode: &Episode) -> Result<Vec<usize>> {
    episode
        .query
        .iter()
        .map(|s| forward_logits(params, &s.x).map(|l| predict(&l)))
        .collect()
}

/// Per-query class probabilities averaged over models adapted from each
/// head pairing in `pairings`, summed in the given order.
pub fn ensemble_probabilities(
    params: &ParamSet,
    episode: &Episode,
    cfg: &InnerLoopConfig,
    pairings: &[Permutation],
) -> Result<Vec<Vec<f64>>> {
    if pairings.is_empty() {
        return Err(Error::invalid("empty ensemble"));
    }
    let mut avg = vec![vec![0.0; episode.n_way]; episode.query.len()];
    for sigma in pairings {
        let adapted = adapt(&params.with_heads_permuted(sigma)?, episode, cfg)?;
        for (row, s) in avg.iter_mut().zip(&episode.query) {
            let probs = softmax(&forward_logits(&adapted, &s.x)?);
            for (a, p) in row.iter_mut().zip(probs) {
                *a += p;
            }
        }
    }
    let m = pairings.len() as f64;
    for row in &mut avg {
        for a in row.iter_mut() {
            *a /= m;
        }
    }
    Ok(avg)
}

/// Selection criterion value; larger is better.
fn criterion(strategy: Strategy, model: &ParamSet, episode: &Episode) -> Result<f64> {
    match strategy {
        Strategy::InitSupportAcc | Strategy::UpdatedSupportAcc => accuracy(model, &episode.support),
        Strategy::InitSupportLoss | Strategy::UpdatedSupportLoss => {
            Ok(-batch_loss(model, &episode.support)?)
        }
        _ => unreachable!("not a selection strategy"),
    }
}

/// Applies `strategy` to one task and scores the query predictions.
///
/// Selection and ensemble strategies permute the head pairing `w_c -> w_{sigma(c)}`
/// with the episode fixed; ties between pairings go to the lexicographically
/// first one.
pub fn run_strategy(
    params: &ParamSet,
    episode: &Episode,
    strategy: Strategy,
    cfg: &InnerLoopConfig,
) -> Result<StrategyOutcome> {
    strategy.check(episode.n_way)?;
    let params = params.expand_for(episode.n_way)?;
    match strategy {
        Strategy::None => {
            let adapted = adapt(&params, episode, cfg)?;
            Ok(score(predictions(&adapted, episode)?, episode, None))
        }
        Strategy::AveragedInit => {
            let adapted = adapt(&params.average_heads()?, episode, cfg)?;
            Ok(score(predictions(&adapted, episode)?, episode, None))
        }
        Strategy::InitSupportAcc | Strategy::InitSupportLoss => {
            let mut best: Option<(f64, Permutation)> = None;
            for sigma in enumerate_permutations(episode.n_way)? {
                let value = criterion(strategy, &params.with_heads_permuted(&sigma)?, episode)?;
                if best.as_ref().is_none_or(|(b, _)| value > *b) {
                    best = Some((value, sigma));
                }
            }
            let (_, sigma) = best.expect("non-empty enumeration");
            let adapted = adapt(&params.with_heads_permuted(&sigma)?, episode, cfg)?;
            Ok(score(predictions(&adapted, episode)?, episode, Some(sigma)))
        }
        Strategy::UpdatedSupportAcc | Strategy::UpdatedSupportLoss => {
            let mut best: Option<(f64, Permutation, ParamSet)> = None;
            for sigma in enumerate_permutations(episode.n_way)? {
                let adapted = adapt(&params.with_heads_permuted(&sigma)?, episode, cfg)?;
                let value = criterion(strategy, &adapted, episode)?;
                if best.as_ref().is_none_or(|(b, _, _)| value > *b) {
                    best = Some((value, sigma, adapted));
                }
            }
            let (_, sigma, adapted) = best.expect("non-empty enumeration");
            Ok(score(predictions(&adapted, episode)?, episode, Some(sigma)))
        }
        Strategy::EnsembleFull | Strategy::EnsembleRotated => {
            let pairings = if strategy == Strategy::EnsembleFull {
                enumerate_permutations(episode.n_way)?
            } else {
                rotated_permutations(episode.n_way)?
            };
            let probs = ensemble_probabilities(&params, episode, cfg, &pairings)?;
            let preds = probs.iter().map(|p| predict(p)).collect();
            Ok(score(preds, episode, None))
        }
    }
}
