//! Permutations of the class indices `1..=N`.
//!
//! Storage is 0-based; every public constructor and accessor that speaks
//! about labels is 1-based.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Largest `n` for which `n!` permutations are enumerated.
pub const MAX_ENUMERATION: usize = 8;

/// A bijection on `{1, ..., N}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    // image[c] = pi(c), both 0-based
    image: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            image: (0..n).collect(),
        }
    }

    /// Builds a permutation from its 1-based mapping array, `mapping[c-1] = pi(c)`.
    pub fn from_one_based(mapping: &[usize]) -> Result<Self> {
        let zero: Vec<usize> = mapping
            .iter()
            .map(|&v| {
                v.checked_sub(1)
                    .ok_or_else(|| Error::invalid("permutation entries are 1-based"))
            })
            .collect::<Result<_>>()?;
        Self::from_zero_based(zero)
    }

    pub fn from_zero_based(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        let mut seen = vec![false; n];
        for &v in &image {
            if v >= n || seen[v] {
                return Err(Error::invalid(format!(
                    "{image:?} is not a bijection of {n} elements"
                )));
            }
            seen[v] = true;
        }
        Ok(Permutation { image })
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    /// `pi(label)` for a 1-based label.
    pub fn apply(&self, label: usize) -> usize {
        self.image[label - 1] + 1
    }

    /// 0-based image of a 0-based index.
    pub fn apply_index(&self, c: usize) -> usize {
        self.image[c]
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.image.iter().map(|v| v + 1).collect()
    }

    pub fn zero_based(&self) -> &[usize] {
        &self.image
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.image.len()];
        for (c, &v) in self.image.iter().enumerate() {
            inv[v] = c;
        }
        Permutation { image: inv }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::invalid("composing permutations of different size"));
        }
        Ok(Permutation {
            image: other.image.iter().map(|&v| self.image[v]).collect(),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(c, &v)| c == v)
    }

    pub fn fixed_points(&self) -> usize {
        self.image
            .iter()
            .enumerate()
            .filter(|(c, &v)| *c == v)
            .count()
    }

    /// Moves `items` so that the element at position `c` ends up at `pi(c)`.
    pub fn permute_slots<T: Clone>(&self, items: &[T]) -> Vec<T> {
        assert_eq!(items.len(), self.len(), "permutation length mismatch");
        let mut out = items.to_vec();
        for (c, item) in items.iter().enumerate() {
            out[self.image[c]] = item.clone();
        }
        out
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.image.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", v + 1)?;
        }
        write!(f, ")")
    }
}

fn guard(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION {
        return Err(Error::capacity(format!(
            "refusing to enumerate {n}! permutations (limit n <= {MAX_ENUMERATION})"
        )));
    }
    Ok(())
}

/// All `n!` permutations in lexicographic order of their mapping arrays.
pub fn enumerate_permutations(n: usize) -> Result<Vec<Permutation>> {
    guard(n)?;
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![Permutation {
        image: current.clone(),
    }];
    // next-permutation in lexicographic order
    while let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) {
        let pivot = i - 1;
        let j = (i..n)
            .rev()
            .find(|&j| current[j] > current[pivot])
            .expect("a successor exists right of the pivot");
        current.swap(pivot, j);
        current[i..].reverse();
        out.push(Permutation {
            image: current.clone(),
        });
    }
    Ok(out)
}

/// The `n` rotations `c -> ((c + gamma) mod n) + 1` for `gamma = 1..=n` (1-based `c`).
pub fn rotated_permutations(n: usize) -> Result<Vec<Permutation>> {
    if n == 0 {
        return Err(Error::invalid("rotations need n >= 1"));
    }
    Ok((1..=n)
        .map(|gamma| {
            let image = (1..=n).map(|c| (c + gamma) % n).collect();
            Permutation { image }
        })
        .collect())
}

/// Number of permutations of `[n]` with exactly `k` fixed points, for every `k`
/// that occurs.
pub fn fixed_point_histogram(n: usize) -> Result<BTreeMap<usize, u64>> {
    guard(n)?;
    let mut hist = BTreeMap::new();
    for p in enumerate_permutations(n)? {
        *hist.entry(p.fixed_points()).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Mean number of fixed points of a uniformly random permutation of `[n]`.
///
/// With one correctly paired assignment scoring 100% on a one-shot task, the
/// expected initial accuracy over all relabelings is this value divided by `n`.
pub fn expected_fixed_points(n: usize) -> Result<f64> {
    let hist = fixed_point_histogram(n)?;
    let total: u64 = hist.values().sum();
    let weighted: u64 = hist.iter().map(|(&k, &c)| k as u64 * c).sum();
    Ok(weighted as f64 / total as f64)
}
