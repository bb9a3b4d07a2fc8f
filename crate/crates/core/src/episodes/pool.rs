use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Base,
    Validation,
    Novel,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Base => "base",
            Split::Validation => "validation",
            Split::Novel => "novel",
        }
    }
}

/// One semantic class: a stable global id and its examples.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolClass {
    pub id: u32,
    pub examples: Vec<Vec<f64>>,
    /// Generating mean, known only for synthetic pools built in-process.
    pub mean: Option<Vec<f64>>,
}

/// A set of classes that episodes are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPool {
    pub classes: Vec<PoolClass>,
    pub dim: usize,
    pub split: Split,
}

impl ClassPool {
    /// Checks shape invariants: shared positive dimension and unique ids.
    pub fn new(classes: Vec<PoolClass>, dim: usize, split: Split) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("pool dimension must be positive"));
        }
        let mut ids: Vec<u32> = classes.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate global class id in pool"));
        }
        for class in &classes {
            if class.examples.iter().any(|x| x.len() != dim) {
                return Err(Error::invalid(format!(
                    "class {} has an example whose length differs from {dim}",
                    class.id
                )));
            }
        }
        Ok(ClassPool {
            classes,
            dim,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn min_examples(&self) -> usize {
        self.classes
            .iter()
            .map(|c| c.examples.len())
            .min()
            .unwrap_or(0)
    }

    pub fn ids(&self) -> Vec<u32> {
        self.classes.iter().map(|c| c.id).collect()
    }

    /// Sub-pool holding the listed ids, in the order given.
    pub fn subset(&self, ids: &[u32], split: Split) -> Result<ClassPool> {
        let classes = ids
            .iter()
            .map(|id| {
                self.classes
                    .iter()
                    .find(|c| c.id == *id)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("class id {id} not in pool")))
            })
            .collect::<Result<Vec<_>>>()?;
        ClassPool::new(classes, self.dim, split)
    }
}

/// Gaussian blobs around means drawn uniformly from `[-1, 1]^dim`.
///
/// Class ids are `0..n_classes`. The pool is a pure function of its arguments.
pub fn generate_synthetic_pool(
    n_classes: usize,
    dim: usize,
    per_class: usize,
    sigma: f64,
    seed: u64,
) -> Result<ClassPool> {
    if n_classes < 2 || per_class < 2 {
        return Err(Error::invalid(
            "need at least 2 classes and 2 examples per class",
        ));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma must be a finite non-negative number"));
    }
    let mut classes = Vec::with_capacity(n_classes);
    for id in 0..n_classes {
        let mut rng = seed::derived_rng(seed, seed::Phase::Data, id as u64);
        let mean: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let examples = (0..per_class)
            .map(|_| {
                mean.iter()
                    .map(|m| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + sigma * z
                    })
                    .collect()
            })
            .collect();
        classes.push(PoolClass {
            id: id as u32,
            examples,
            mean: Some(mean),
        });
    }
    ClassPool::new(classes, dim, Split::Base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_examples_equal_means() {
        let pool = generate_synthetic_pool(2, 1, 2, 0.0, 7).unwrap();
        for class in &pool.classes {
            let mean = class.mean.as_ref().unwrap();
            for x in &class.examples {
                assert_eq!(x, mean);
            }
            assert!(mean[0] >= -1.0 && mean[0] <= 1.0);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_synthetic_pool(5, 3, 4, 0.5, 7).unwrap();
        let b = generate_synthetic_pool(5, 3, 4, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_pool(5, 3, 4, 0.5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_means_track_generator_means() {
        let pool = generate_synthetic_pool(50, 16, 40, 0.3, 1).unwrap();
        for class in &pool.classes {
            let mean = class.mean.as_ref().unwrap();
            for d in 0..16 {
                let avg: f64 =
                    class.examples.iter().map(|x| x[d]).sum::<f64>() / class.examples.len() as f64;
                assert!((avg - mean[d]).abs() < 0.2, "class {} dim {d}", class.id);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_synthetic_pool(1, 2, 2, 0.1, 0).is_err());
        assert!(generate_synthetic_pool(2, 0, 2, 0.1, 0).is_err());
        assert!(generate_synthetic_pool(2, 2, 1, 0.1, 0).is_err());
        assert!(generate_synthetic_pool(2, 2, 2, -0.1, 0).is_err());
        assert!(generate_synthetic_pool(2, 2, 2, f64::NAN, 0).is_err());
    }

    #[test]
    fn subset_keeps_requested_ids() {
        let pool = generate_synthetic_pool(6, 2, 3, 0.1, 3).unwrap();
        let sub = pool.subset(&[4, 1], Split::Novel).unwrap();
        assert_eq!(sub.ids(), vec![4, 1]);
        assert_eq!(sub.split, Split::Novel);
        assert!(pool.subset(&[99], Split::Novel).is_err());
    }
}
