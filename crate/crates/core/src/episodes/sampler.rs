use rand::seq::index;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::permutation::Permutation;
use super::pool::ClassPool;
use crate::error::{Error, Result};
use crate::seed;

/// Shape of an N-way K-shot task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
}

impl EpisodeSpec {
    pub fn new(n_way: usize, k_shot: usize, q_query: usize) -> Result<Self> {
        let spec = EpisodeSpec {
            n_way,
            k_shot,
            q_query,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 || self.k_shot < 1 || self.q_query < 1 {
            return Err(Error::invalid(format!(
                "episode spec needs N >= 2, K >= 1, Q >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        EpisodeSpec {
            n_way: 5,
            k_shot: 1,
            q_query: 15,
        }
    }
}

/// A labelled feature vector. `label` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
}

/// One few-shot task.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub n_way: usize,
    pub support: Vec<Sample>,
    pub query: Vec<Sample>,
    /// `assignment[c - 1]` is the global class id carrying label `c`.
    pub assignment: Vec<u32>,
}

impl Episode {
    /// Global class id behind a 1-based label.
    pub fn class_of(&self, label: usize) -> u32 {
        self.assignment[label - 1]
    }

    /// Relabels every sample `y -> pi(y)`; features are untouched.
    pub fn permuted(&self, pi: &Permutation) -> Result<Episode> {
        apply_permutation(self, pi)
    }

    /// Permutation that relabels the episode so that labels follow the
    /// ascending order of the global class ids.
    pub fn sorting_permutation(&self) -> Permutation {
        let mut order: Vec<usize> = (0..self.n_way).collect();
        order.sort_by_key(|&c| self.assignment[c]);
        // order[r] is the label index holding rank r; pi maps label -> rank
        let mut image = vec![0; self.n_way];
        for (rank, &c) in order.iter().enumerate() {
            image[c] = rank;
        }
        Permutation::from_zero_based(image).expect("ranks form a bijection")
    }

    pub fn sorted_by_class_id(&self) -> Episode {
        self.permuted(&self.sorting_permutation())
            .expect("sorting permutation has the episode's size")
    }
}

/// Draws an episode from `pool`.
///
/// Classes are chosen without replacement, labelled by a uniformly random
/// bijection (Fisher–Yates), and each class contributes `k_shot` support and
/// `q_query` query examples drawn without replacement. Support and query are
/// ordered by label.
pub fn sample_episode(pool: &ClassPool, spec: &EpisodeSpec, seed: u64) -> Result<Episode> {
    spec.validate()?;
    let n = spec.n_way;
    if pool.len() < n {
        return Err(Error::capacity(format!(
            "pool has {} classes, episode needs {n}",
            pool.len()
        )));
    }
    let per_class = spec.k_shot + spec.q_query;
    let mut rng = seed::rng(seed);
    let chosen = index::sample(&mut rng, pool.len(), n).into_vec();
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(&mut rng);

    // by_label[c] = pool index of the class carrying label c
    let mut by_label = vec![0usize; n];
    for (slot, &class_idx) in chosen.iter().enumerate() {
        by_label[labels[slot]] = class_idx;
    }

    let mut support = Vec::with_capacity(n * spec.k_shot);
    let mut query = Vec::with_capacity(n * spec.q_query);
    let mut assignment = Vec::with_capacity(n);
    for (c, &class_idx) in by_label.iter().enumerate() {
        let class = &pool.classes[class_idx];
        if class.examples.len() < per_class {
            return Err(Error::capacity(format!(
                "class {} has {} examples, episode needs {per_class}",
                class.id,
                class.examples.len()
            )));
        }
        assignment.push(class.id);
        let picks = index::sample(&mut rng, class.examples.len(), per_class).into_vec();
        for (i, &e) in picks.iter().enumerate() {
            let sample = Sample {
                x: class.examples[e].clone(),
                label: c + 1,
            };
            if i < spec.k_shot {
                support.push(sample);
            } else {
                query.push(sample);
            }
        }
    }
    Ok(Episode {
        n_way: n,
        support,
        query,
        assignment,
    })
}

/// Replaces every label `y` by `pi(y)` and re-keys the assignment.
pub fn apply_permutation(ep: &Episode, pi: &Permutation) -> Result<Episode> {
    if pi.len() != ep.n_way {
        return Err(Error::invalid(format!(
            "permutation of size {} applied to a {}-way episode",
            pi.len(),
            ep.n_way
        )));
    }
    let relabel = |s: &Sample| Sample {
        x: s.x.clone(),
        label: pi.apply(s.label),
    };
    Ok(Episode {
        n_way: ep.n_way,
        support: ep.support.iter().map(relabel).collect(),
        query: ep.query.iter().map(relabel).collect(),
        assignment: pi.permute_slots(&ep.assignment),
    })
}
