use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::episodes::Permutation;
use crate::error::{Error, Result};
use crate::seed;

/// Affine map `y = W x + b` with `W` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn from_rows(rows: &[&[f64]], bias: &[f64]) -> Result<Self> {
        let outputs = rows.len();
        let inputs = rows.first().map_or(0, |r| r.len());
        if outputs == 0 || inputs == 0 || rows.iter().any(|r| r.len() != inputs) {
            return Err(Error::invalid("ragged or empty weight matrix"));
        }
        if bias.len() != outputs {
            return Err(Error::invalid("bias length differs from row count"));
        }
        Ok(Layer {
            inputs,
            outputs,
            weight: rows.concat(),
            bias: bias.to_vec(),
        })
    }
}

/// Stack of affine layers, each followed by a ReLU. No layers means `f(x) = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
}

impl Encoder {
    pub fn identity(input_dim: usize) -> Self {
        Encoder {
            input_dim,
            layers: Vec::new(),
        }
    }

    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs != width
                || layer.weight.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return Err(Error::invalid(format!("layer {i} does not chain")));
            }
            width = layer.outputs;
        }
        Ok(Encoder { input_dim, layers })
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.outputs)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    /// He-uniform weights, zero biases.
    pub fn he_uniform(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut rng = seed::derived_rng(seed, seed::Phase::Init, 0);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let bound = (6.0 / inputs as f64).sqrt();
                let mut layer = Layer::zeros(inputs, outputs);
                for v in &mut layer.weight {
                    *v = rng.random_range(-bound..bound);
                }
                layer
            })
            .collect();
        Encoder::new(layer_sizes[0], layers)
    }

    fn zeros_like(&self) -> Self {
        Encoder {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.is_empty() || layer_sizes.contains(&0) {
        return Err(Error::invalid(format!(
            "layer sizes must be non-empty and positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    PerClass,
    Shared,
}

/// Linear classifier heads (no bias).
#[derive(Debug, Clone, PartialEq)]
pub enum Heads {
    PerClass(Vec<Vec<f64>>),
    Shared(Vec<f64>),
}

impl Heads {
    pub fn mode(&self) -> HeadMode {
        match self {
            Heads::PerClass(_) => HeadMode::PerClass,
            Heads::Shared(_) => HeadMode::Shared,
        }
    }

    /// Number of head vectors stored.
    pub fn count(&self) -> usize {
        match self {
            Heads::PerClass(h) => h.len(),
            Heads::Shared(_) => 1,
        }
    }

    pub fn vectors(&self) -> Vec<&[f64]> {
        match self {
            Heads::PerClass(h) => h.iter().map(Vec::as_slice).collect(),
            Heads::Shared(w) => vec![w.as_slice()],
        }
    }

    fn vectors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Heads::PerClass(h) => h.iter_mut().collect(),
            Heads::Shared(w) => vec![w],
        }
    }

    /// Vectors drawn from `U(-1/sqrt(F), 1/sqrt(F))`.
    pub fn random(mode: HeadMode, n_way: usize, feature_dim: usize, seed: u64) -> Self {
        let mut rng = seed::derived_rng(seed, seed::Phase::Init, 1);
        let bound = 1.0 / (feature_dim as f64).sqrt();
        let mut draw = || -> Vec<f64> {
            (0..feature_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect()
        };
        match mode {
            HeadMode::PerClass => Heads::PerClass((0..n_way).map(|_| draw()).collect()),
            HeadMode::Shared => Heads::Shared(draw()),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Heads::PerClass(h) => Heads::PerClass(h.iter().map(|w| vec![0.0; w.len()]).collect()),
            Heads::Shared(w) => Heads::Shared(vec![0.0; w.len()]),
        }
    }
}

/// Which learning-rate group a parameter tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Encoder,
    Heads,
}

/// Full model state: encoder plus heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub encoder: Encoder,
    pub heads: Heads,
}

impl ParamSet {
    pub fn new(encoder: Encoder, heads: Heads) -> Result<Self> {
        let f = encoder.feature_dim();
        if heads.vectors().iter().any(|w| w.len() != f) {
            return Err(Error::invalid(format!(
                "head length differs from feature dim {f}"
            )));
        }
        if let Heads::PerClass(h) = &heads {
            if h.is_empty() {
                return Err(Error::invalid("per-class heads must not be empty"));
            }
        }
        Ok(ParamSet { encoder, heads })
    }

    /// He-uniform encoder and uniformly initialized heads.
    pub fn init(layer_sizes: &[usize], mode: HeadMode, n_way: usize, seed: u64) -> Result<Self> {
        let encoder = Encoder::he_uniform(layer_sizes, seed)?;
        let heads = Heads::random(mode, n_way, encoder.feature_dim(), seed);
        ParamSet::new(encoder, heads)
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.feature_dim()
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            encoder: self.encoder.zeros_like(),
            heads: self.heads.zeros_like(),
        }
    }

    /// Every parameter tensor in declaration order: per layer weight then
    /// bias, then the head vectors.
    pub fn tensors(&self) -> Vec<(Group, &[f64])> {
        let mut out = Vec::new();
        for l in &self.encoder.layers {
            out.push((Group::Encoder, l.weight.as_slice()));
            out.push((Group::Encoder, l.bias.as_slice()));
        }
        for w in self.heads.vectors() {
            out.push((Group::Heads, w));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(Group, &mut [f64])> {
        let mut out: Vec<(Group, &mut [f64])> = Vec::new();
        for l in &mut self.encoder.layers {
            out.push((Group::Encoder, l.weight.as_mut_slice()));
            out.push((Group::Encoder, l.bias.as_mut_slice()));
        }
        for w in self.heads.vectors_mut() {
            out.push((Group::Heads, w.as_mut_slice()));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tensors().iter().map(|(_, t)| t.len()).collect()
    }

    pub fn congruent(&self, other: &ParamSet) -> bool {
        self.heads.mode() == other.heads.mode()
            && self.encoder.layer_sizes() == other.encoder.layer_sizes()
            && self.shape() == other.shape()
    }

    pub(crate) fn ensure_congruent(&self, other: &ParamSet) -> Result<()> {
        if !self.congruent(other) {
            return Err(Error::invalid(format!(
                "shape mismatch: {:?}/{:?} vs {:?}/{:?}",
                self.encoder.layer_sizes(),
                self.heads.mode(),
                other.encoder.layer_sizes(),
                other.heads.mode()
            )));
        }
        Ok(())
    }

    /// `self += a * other`, optionally restricted to one group.
    pub(crate) fn axpy(&mut self, a: f64, other: &ParamSet, only: Option<Group>) {
        for ((group, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            if only.is_some_and(|g| g != group) {
                continue;
            }
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    /// Pairs head `c` with label `pi(c)`: `new_heads[pi(c)] = heads[c]`.
    ///
    /// Relabeling an episode by `pi` and permuting heads by `pi` leaves every
    /// prediction unchanged.
    pub fn with_heads_permuted(&self, pi: &Permutation) -> Result<ParamSet> {
        match &self.heads {
            Heads::PerClass(h) if h.len() == pi.len() => Ok(ParamSet {
                encoder: self.encoder.clone(),
                heads: Heads::PerClass(pi.permute_slots(h)),
            }),
            Heads::PerClass(h) => Err(Error::invalid(format!(
                "permutation of size {} applied to {} heads",
                pi.len(),
                h.len()
            ))),
            Heads::Shared(_) => Err(Error::state("cannot permute a shared head")),
        }
    }

    /// Shared head -> `n` identical per-class heads.
    pub fn duplicate_head(&self, n: usize) -> Result<ParamSet> {
        match &self.heads {
            Heads::Shared(w) => {
                if n == 0 {
                    return Err(Error::invalid("cannot duplicate into zero heads"));
                }
                Ok(ParamSet {
                    encoder: self.encoder.clone(),
                    heads: Heads::PerClass(vec![w.clone(); n]),
                })
            }
            Heads::PerClass(_) => Err(Error::state("duplicate_head needs a shared head")),
        }
    }

    /// Replaces every per-class head by the mean of all heads.
    pub fn average_heads(&self) -> Result<ParamSet> {
        match &self.heads {
            Heads::PerClass(h) => {
                let n = h.len() as f64;
                let mut mean = vec![0.0; self.feature_dim()];
                for w in h {
                    for (m, v) in mean.iter_mut().zip(w) {
                        *m += v;
                    }
                }
                for m in &mut mean {
                    *m /= n;
                }
                Ok(ParamSet {
                    encoder: self.encoder.clone(),
                    heads: Heads::PerClass(vec![mean; h.len()]),
                })
            }
            Heads::Shared(_) => Err(Error::state("average_heads needs per-class heads")),
        }
    }

    /// Per-class heads for an `n_way` task: shared heads are duplicated,
    /// per-class heads must already have `n_way` entries.
    pub fn expand_for(&self, n_way: usize) -> Result<ParamSet> {
        match &self.heads {
            Heads::Shared(_) => self.duplicate_head(n_way),
            Heads::PerClass(h) if h.len() == n_way => Ok(self.clone()),
            Heads::PerClass(h) => Err(Error::invalid(format!(
                "model has {} heads but the task is {n_way}-way",
                h.len()
            ))),
        }
    }
}

/// Gradient of a scalar loss with respect to a [`ParamSet`], stored with the
/// same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet(pub(crate) ParamSet);

impl GradSet {
    pub fn zeros_like(params: &ParamSet) -> Self {
        GradSet(params.zeros_like())
    }

    pub fn from_params(values: ParamSet) -> Self {
        GradSet(values)
    }

    pub fn as_params(&self) -> &ParamSet {
        &self.0
    }

    pub fn encoder(&self) -> &Encoder {
        &self.0.encoder
    }

    pub fn heads(&self) -> &Heads {
        &self.0.heads
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.flat()
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &GradSet) -> Result<()> {
        self.0.ensure_congruent(&other.0)?;
        self.0.axpy(1.0, &other.0, None);
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for (_, t) in self.0.tensors_mut() {
            for v in t {
                *v *= a;
            }
        }
    }

    /// Mean of gradients, summed in slice order.
    pub fn mean(grads: &[GradSet]) -> Result<GradSet> {
        let first = grads
            .first()
            .ok_or_else(|| Error::invalid("mean of zero gradients"))?;
        let mut acc = first.clone();
        for g in &grads[1..] {
            acc.add_assign(g)?;
        }
        acc.scale(1.0 / grads.len() as f64);
        Ok(acc)
    }

    /// Folds per-class head gradients into one shared-head gradient by
    /// summing them in class order; the encoder part is kept.
    pub fn aggregate_heads(&self) -> Result<GradSet> {
        match &self.0.heads {
            Heads::PerClass(h) => {
                let mut sum = vec![0.0; self.0.feature_dim()];
                for g in h {
                    for (s, v) in sum.iter_mut().zip(g) {
                        *s += v;
                    }
                }
                Ok(GradSet(ParamSet {
                    encoder: self.0.encoder.clone(),
                    heads: Heads::Shared(sum),
                }))
            }
            Heads::Shared(_) => Err(Error::state("gradient already has a shared head")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_heads(a: Vec<f64>, b: Vec<f64>) -> ParamSet {
        ParamSet::new(Encoder::identity(a.len()), Heads::PerClass(vec![a, b])).unwrap()
    }

    #[test]
    fn duplicate_head_copies() {
        let p = ParamSet::new(Encoder::identity(2), Heads::Shared(vec![1.0, 2.0])).unwrap();
        let d = p.duplicate_head(3).unwrap();
        assert_eq!(d.heads, Heads::PerClass(vec![vec![1.0, 2.0]; 3]));
        assert_eq!(
            p.duplicate_head(1).unwrap().heads,
            Heads::PerClass(vec![vec![1.0, 2.0]])
        );
        assert!(matches!(d.duplicate_head(2), Err(Error::State(_))));
    }

    #[test]
    fn aggregate_after_duplicate_multiplies() {
        let g = GradSet(two_heads(vec![0.5, -1.0], vec![0.5, -1.0]));
        let shared = g.aggregate_heads().unwrap();
        assert_eq!(shared.heads(), &Heads::Shared(vec![1.0, -2.0]));

        let g = GradSet(two_heads(vec![1.0, 2.0], vec![3.0, 4.0]));
        assert_eq!(
            g.aggregate_heads().unwrap().heads(),
            &Heads::Shared(vec![4.0, 6.0])
        );
    }

    #[test]
    fn average_heads_cases() {
        let p = two_heads(vec![1.0, 0.0], vec![0.0, 1.0]);
        let avg = p.average_heads().unwrap();
        assert_eq!(avg.heads, Heads::PerClass(vec![vec![0.5, 0.5]; 2]));
        let same = two_heads(vec![0.25, 3.0], vec![0.25, 3.0]);
        assert_eq!(same.average_heads().unwrap(), same);
        let swapped = p
            .with_heads_permuted(&Permutation::from_one_based(&[2, 1]).unwrap())
            .unwrap();
        assert_eq!(swapped.average_heads().unwrap(), avg);
        let shared = ParamSet::new(Encoder::identity(1), Heads::Shared(vec![1.0])).unwrap();
        assert!(matches!(shared.average_heads(), Err(Error::State(_))));
    }

    #[test]
    fn deep_copy_is_independent() {
        let p = ParamSet::init(&[3, 4, 2], HeadMode::PerClass, 3, 5).unwrap();
        let mut q = p.clone();
        q.tensors_mut()[0].1[0] += 1.0;
        assert_ne!(p, q);
        assert!(p.congruent(&q));
    }

    #[test]
    fn init_shapes_and_ranges() {
        let p = ParamSet::init(&[4, 8, 6], HeadMode::PerClass, 5, 1).unwrap();
        assert_eq!(p.feature_dim(), 6);
        assert_eq!(p.heads.count(), 5);
        let bound = 1.0 / 6f64.sqrt();
        assert!(p
            .heads
            .vectors()
            .iter()
            .flat_map(|w| w.iter())
            .all(|v| v.abs() < bound));
        assert_eq!(
            p,
            ParamSet::init(&[4, 8, 6], HeadMode::PerClass, 5, 1).unwrap()
        );
        assert!(ParamSet::init(&[4, 0], HeadMode::PerClass, 5, 1).is_err());
    }

    #[test]
    fn shape_checks() {
        assert!(ParamSet::new(Encoder::identity(2), Heads::Shared(vec![1.0])).is_err());
        let a = two_heads(vec![0.0], vec![0.0]);
        let b = ParamSet::new(Encoder::identity(1), Heads::Shared(vec![0.0])).unwrap();
        assert!(a.ensure_congruent(&b).is_err());
        let mut g = GradSet::zeros_like(&a);
        assert!(g.add_assign(&GradSet::zeros_like(&b)).is_err());
    }
}
