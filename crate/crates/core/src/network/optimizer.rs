use serde::{Deserialize, Serialize};

use super::params::{GradSet, Group, ParamSet};
use crate::error::{Error, Result};

/// Outer-loop SGD settings. Defaults follow the usual MAML schedule:
/// momentum 0.9, weight decay 5e-4, base rates 1e-3 (encoder) and 1e-2
/// (heads), both multiplied by 0.1 every 20 epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_encoder: f64,
    pub lr_heads: f64,
    pub decay_factor: f64,
    pub decay_epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_encoder: 0.001,
            lr_heads: 0.01,
            decay_factor: 0.1,
            decay_epochs: 20,
        }
    }
}

impl OptimizerConfig {
    /// Same schedule with both base rates scaled by 0.1; the default for
    /// meta-training.
    pub fn desk() -> Self {
        let base = OptimizerConfig::default();
        OptimizerConfig {
            lr_encoder: base.lr_encoder * 0.1,
            lr_heads: base.lr_heads * 0.1,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_encoder >= 0.0
            && self.lr_heads >= 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.decay_factor > 0.0
            && self.decay_epochs > 0;
        if !ok {
            return Err(Error::invalid(format!("bad optimizer settings {self:?}")));
        }
        Ok(())
    }

    /// `(encoder, heads)` learning rates for a 0-based epoch.
    pub fn rates_at(&self, epoch: usize) -> (f64, f64) {
        let decay = self.decay_factor.powi((epoch / self.decay_epochs) as i32);
        (self.lr_encoder * decay, self.lr_heads * decay)
    }
}

/// Momentum SGD with coupled weight decay: `v <- mu v + (g + wd theta)`,
/// `theta <- theta - lr v`.
#[derive(Debug, Clone)]
pub struct OuterOptimizer {
    pub config: OptimizerConfig,
    velocity: ParamSet,
}

impl OuterOptimizer {
    pub fn new(config: OptimizerConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        Ok(OuterOptimizer {
            config,
            velocity: params.zeros_like(),
        })
    }

    pub fn velocity(&self) -> &ParamSet {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut ParamSet, grad: &GradSet, epoch: usize) -> Result<()> {
        params.ensure_congruent(grad.as_params())?;
        params.ensure_congruent(&self.velocity)?;
        let (lr_enc, lr_heads) = self.config.rates_at(epoch);
        let mu = self.config.momentum;
        let wd = self.config.weight_decay;
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.velocity.tensors_mut())
            .zip(grad.as_params().tensors());
        for (((group, theta), (_, vel)), (_, g)) in tensors {
            let lr = match group {
                Group::Encoder => lr_enc,
                Group::Heads => lr_heads,
            };
            for ((t, v), g) in theta.iter_mut().zip(vel.iter_mut()).zip(g) {
                *v = mu * *v + (g + wd * *t);
                *t -= lr * *v;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::params::{Encoder, HeadMode, Heads};
    use super::*;

    fn scalar(theta: f64) -> ParamSet {
        ParamSet::new(Encoder::identity(1), Heads::Shared(vec![theta])).unwrap()
    }

    fn plain(lr: f64, wd: f64, momentum: f64) -> OptimizerConfig {
        OptimizerConfig {
            momentum,
            weight_decay: wd,
            lr_encoder: lr,
            lr_heads: lr,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op_without_decay() {
        let mut p = ParamSet::init(&[3, 4], HeadMode::PerClass, 2, 1).unwrap();
        let before = p.clone();
        let mut opt = OuterOptimizer::new(plain(0.1, 0.0, 0.9), &p).unwrap();
        opt.step(&mut p, &GradSet::zeros_like(&before), 0).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.velocity(), &before.zeros_like());
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = scalar(1.0);
        let mut opt = OuterOptimizer::new(plain(0.1, 0.0, 0.0), &p).unwrap();
        opt.step(&mut p, &GradSet::from_params(scalar(1.0)), 0)
            .unwrap();
        assert_eq!(p.heads, Heads::Shared(vec![0.9]));
    }

    #[test]
    fn weight_decay_alone() {
        let mut p = scalar(1.0);
        let mut opt = OuterOptimizer::new(plain(0.1, 0.0005, 0.0), &p).unwrap();
        opt.step(&mut p, &GradSet::from_params(scalar(0.0)), 0)
            .unwrap();
        let Heads::Shared(w) = &p.heads else { panic!() };
        assert!((w[0] - 0.99995).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = scalar(0.0);
        let mut opt = OuterOptimizer::new(plain(1.0, 0.0, 0.5), &p).unwrap();
        let g = GradSet::from_params(scalar(1.0));
        opt.step(&mut p, &g, 0).unwrap();
        opt.step(&mut p, &g, 0).unwrap();
        // v1 = 1, v2 = 1.5
        assert_eq!(p.heads, Heads::Shared(vec![-2.5]));
    }

    #[test]
    fn schedule_decays_per_group() {
        let c = OptimizerConfig::default();
        assert_eq!(c.rates_at(0), (0.001, 0.01));
        assert_eq!(c.rates_at(19), (0.001, 0.01));
        let (e, h) = c.rates_at(20);
        assert!((e - 1e-4).abs() < 1e-18 && (h - 1e-3).abs() < 1e-17);
        let (e, _) = c.rates_at(45);
        assert!((e - 1e-5).abs() < 1e-19);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = scalar(0.0);
        let mut opt = OuterOptimizer::new(OptimizerConfig::default(), &p).unwrap();
        let other = ParamSet::init(&[1], HeadMode::PerClass, 2, 0).unwrap();
        assert!(opt.step(&mut p, &GradSet::zeros_like(&other), 0).is_err());
        assert!(OuterOptimizer::new(plain(-1.0, 0.0, 0.0), &p).is_err());
    }
}
