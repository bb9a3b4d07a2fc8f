use serde::{Deserialize, Serialize};

use crate::episodes::{enumerate_permutations, Episode, Permutation, Sample, MAX_ENUMERATION};
use crate::error::{Error, Result};
use crate::network::{
    accuracy, batch_loss_and_grad, cross_entropy, forward_logits, GradSet, Group, Heads, ParamSet,
};

/// Inner-loop settings: `steps` plain gradient steps of size `alpha` on the
/// summed support loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerLoopConfig {
    pub steps: usize,
    pub alpha: f64,
    /// Adapt only the heads.
    #[serde(default)]
    pub freeze_encoder: bool,
}

impl InnerLoopConfig {
    pub fn new(steps: usize, alpha: f64) -> Result<Self> {
        let cfg = InnerLoopConfig {
            steps,
            alpha,
            freeze_encoder: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "inner step size must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

impl Default for InnerLoopConfig {
    fn default() -> Self {
        InnerLoopConfig {
            steps: 5,
            alpha: 0.05,
            freeze_encoder: false,
        }
    }
}

fn require_per_class(params: &ParamSet) -> Result<()> {
    match params.heads {
        Heads::PerClass(_) => Ok(()),
        Heads::Shared(_) => Err(Error::state(
            "inner loop needs per-class heads; duplicate the shared head first",
        )),
    }
}

/// One plain gradient step on `support`, in place.
pub(crate) fn inner_step(
    params: &mut ParamSet,
    support: &[Sample],
    cfg: &InnerLoopConfig,
) -> Result<()> {
    let (_, grad) = batch_loss_and_grad(params, support)?;
    let only = cfg.freeze_encoder.then_some(Group::Heads);
    params.axpy(-cfg.alpha, grad.as_params(), only);
    Ok(())
}

/// `cfg.steps` gradient-descent steps from `params` on the support set.
/// The input is left untouched.
pub fn inner_loop(
    params: &ParamSet,
    support: &[Sample],
    cfg: &InnerLoopConfig,
) -> Result<ParamSet> {
    require_per_class(params)?;
    cfg.validate()?;
    let mut adapted = params.clone();
    for _ in 0..cfg.steps {
        inner_step(&mut adapted, support, cfg)?;
    }
    Ok(adapted)
}

/// Query-set outcome of one task together with its meta-gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaGrad {
    pub query_loss: f64,
    pub grad: GradSet,
    pub query_acc: f64,
}

/// First-order meta-gradient: adapt on the support set, then take the
/// query gradient at the adapted parameters as the gradient of the
/// initialization.
pub fn fo_meta_grad(
    params: &ParamSet,
    episode: &Episode,
    cfg: &InnerLoopConfig,
) -> Result<MetaGrad> {
    let adapted = inner_loop(params, &episode.support, cfg)?;
    let (query_loss, grad) = batch_loss_and_grad(&adapted, &episode.query)?;
    let query_acc = accuracy(&adapted, &episode.query)?;
    Ok(MetaGrad {
        query_loss,
        grad,
        query_acc,
    })
}

/// Shared-head meta-gradient: the head is duplicated per class, adapted as
/// usual, and the per-head query gradients are summed into one.
pub fn unicorn_meta_grad(
    params: &ParamSet,
    episode: &Episode,
    cfg: &InnerLoopConfig,
) -> Result<MetaGrad> {
    if !matches!(params.heads, Heads::Shared(_)) {
        return Err(Error::state("unicorn meta-gradient needs a shared head"));
    }
    let expanded = params.duplicate_head(episode.n_way)?;
    let per_class = fo_meta_grad(&expanded, episode, cfg)?;
    Ok(MetaGrad {
        grad: per_class.grad.aggregate_heads()?,
        ..per_class
    })
}

/// Relabeling `pi` of the episode that minimises the support loss at the
/// initialization (before any adaptation). Ties go to the lexicographically
/// first permutation.
pub fn select_permutation_min_support_loss(
    params: &ParamSet,
    episode: &Episode,
) -> Result<Permutation> {
    let n = episode.n_way;
    if n > MAX_ENUMERATION {
        return Err(Error::capacity(format!(
            "permutation search over {n}! pairings is not supported"
        )));
    }
    let expanded = params.expand_for(n)?;
    let logits = episode
        .support
        .iter()
        .map(|s| forward_logits(&expanded, &s.x))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, Permutation)> = None;
    for pi in enumerate_permutations(n)? {
        let loss: f64 = logits
            .iter()
            .zip(&episode.support)
            .map(|(l, s)| cross_entropy(l, pi.apply(s.label)))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, pi));
        }
    }
    Ok(best.expect("at least one permutation").1)
}
