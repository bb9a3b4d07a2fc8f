use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episodes::{
    enumerate_permutations, sample_episode, ClassPool, Episode, EpisodeSpec, MAX_ENUMERATION,
};
use crate::error::{Error, Result};
use crate::maml::{inner_loop, InnerLoopConfig};
use crate::network::{accuracy, ParamSet};
use crate::seed::{self, Phase};

/// Rank-averaged permutation accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadResult {
    /// Entry `r` is the mean over tasks of each task's `r`-th best
    /// permutation accuracy (fractions in `[0, 1]`).
    pub rank_avg_acc: Vec<f64>,
    /// Per task, best minus worst permutation accuracy.
    pub per_task_spread: Vec<f64>,
}

impl SpreadResult {
    /// Occupancy of 1-percentage-point bins over `rank_avg_acc`, keyed by
    /// the bin's lower edge in percent.
    pub fn histogram(&self) -> BTreeMap<i64, usize> {
        let mut bins = BTreeMap::new();
        for a in &self.rank_avg_acc {
            *bins.entry((a * 100.0).floor() as i64).or_insert(0) += 1;
        }
        bins
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "rank_avg_acc"])?;
        for (r, a) in self.rank_avg_acc.iter().enumerate() {
            w.write_record([(r + 1).to_string(), a.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Query accuracy after adapting from each head pairing, in lexicographic
/// order of the pairings.
pub fn permutation_accuracies(
    params: &ParamSet,
    episode: &Episode,
    cfg: &InnerLoopConfig,
) -> Result<Vec<f64>> {
    let expanded = params.expand_for(episode.n_way)?;
    enumerate_permutations(episode.n_way)?
        .iter()
        .map(|sigma| {
            let adapted = inner_loop(&expanded.with_heads_permuted(sigma)?, &episode.support, cfg)?;
            accuracy(&adapted, &episode.query)
        })
        .collect()
}

/// For every task, scores all `n_way!` pairings, sorts them in descending
/// order and averages across tasks rank by rank. Task `i` is the same
/// episode that `metatest::evaluate` draws with the same seed.
pub fn permutation_spread(
    params: &ParamSet,
    pool: &ClassPool,
    spec: &EpisodeSpec,
    cfg: &InnerLoopConfig,
    n_tasks: usize,
    seed: u64,
) -> Result<SpreadResult> {
    if spec.n_way > MAX_ENUMERATION {
        return Err(Error::capacity(format!(
            "spread analysis over {}! pairings is not supported",
            spec.n_way
        )));
    }
    if n_tasks == 0 {
        return Err(Error::invalid("spread analysis needs at least one task"));
    }
    let per_task = (0..n_tasks)
        .into_par_iter()
        .map(|i| {
            let episode = sample_episode(pool, spec, seed::derive(seed, Phase::Eval, i as u64))?;
            let mut accs = permutation_accuracies(params, &episode, cfg)?;
            accs.sort_by(|a, b| b.total_cmp(a));
            Ok(accs)
        })
        .collect::<Result<Vec<_>>>()?;

    let ranks = per_task[0].len();
    let mut rank_avg_acc = vec![0.0; ranks];
    for accs in &per_task {
        for (r, a) in accs.iter().enumerate() {
            rank_avg_acc[r] += a;
        }
    }
    for v in &mut rank_avg_acc {
        *v /= n_tasks as f64;
    }
    let per_task_spread = per_task.iter().map(|a| a[0] - a[ranks - 1]).collect();
    Ok(SpreadResult {
        rank_avg_acc,
        per_task_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::generate_synthetic_pool;
    use crate::network::HeadMode;

    #[test]
    fn ranks_are_sorted_and_sized() {
        let pool = generate_synthetic_pool(8, 4, 10, 0.4, 1).unwrap();
        let spec = EpisodeSpec::new(3, 1, 5).unwrap();
        let p = ParamSet::init(&[4, 6], HeadMode::PerClass, 3, 2).unwrap();
        let cfg = InnerLoopConfig::new(3, 0.2).unwrap();
        let r = permutation_spread(&p, &pool, &spec, &cfg, 12, 3).unwrap();
        assert_eq!(r.rank_avg_acc.len(), 6);
        assert!(r.rank_avg_acc.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(r.per_task_spread.len(), 12);
        assert!(r.per_task_spread.iter().all(|&s| s >= 0.0));
        assert_eq!(r.histogram().values().sum::<usize>(), 6);
    }

    #[test]
    fn shared_head_has_no_spread() {
        let pool = generate_synthetic_pool(8, 4, 10, 0.4, 1).unwrap();
        let spec = EpisodeSpec::new(3, 1, 5).unwrap();
        let p = ParamSet::init(&[4, 6], HeadMode::Shared, 3, 2).unwrap();
        let cfg = InnerLoopConfig::new(3, 0.2).unwrap();
        let r = permutation_spread(&p, &pool, &spec, &cfg, 5, 3).unwrap();
        assert!(r.per_task_spread.iter().all(|&s| s == 0.0));
        assert_eq!(r.histogram().len(), 1);
    }

    #[test]
    fn capacity_guard() {
        let pool = generate_synthetic_pool(10, 2, 3, 0.4, 1).unwrap();
        let spec = EpisodeSpec::new(9, 1, 1).unwrap();
        let p = ParamSet::init(&[2], HeadMode::PerClass, 9, 2).unwrap();
        let cfg = InnerLoopConfig::default();
        assert!(matches!(
            permutation_spread(&p, &pool, &spec, &cfg, 1, 0),
            Err(Error::Capacity(_))
        ));
    }
}
