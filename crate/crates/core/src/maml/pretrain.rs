use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::episodes::{ClassPool, Sample, Split};
use crate::error::{Error, Result};
use crate::network::{
    accuracy, batch_loss_and_grad, Encoder, HeadMode, Heads, OptimizerConfig, OuterOptimizer,
    ParamSet,
};
use crate::seed::{self, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub layer_sizes: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            layer_sizes: vec![16, 32, 32],
            epochs: 10,
            lr: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Encoder plus the all-class head it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub model: ParamSet,
    pub train_acc: f64,
}

/// Standard cross-entropy training over every class of a base pool with
/// momentum SGD on mini-batch means.
pub fn pretrain_classifier(pool: &ClassPool, cfg: &PretrainConfig) -> Result<Pretrained> {
    if pool.is_empty() || pool.min_examples() == 0 {
        return Err(Error::invalid("pre-training needs a non-empty pool"));
    }
    if pool.split != Split::Base {
        return Err(Error::invalid("pre-training runs on the base split only"));
    }
    if cfg.layer_sizes.first() != Some(&pool.dim) {
        return Err(Error::invalid(format!(
            "encoder input {:?} does not match pool dim {}",
            cfg.layer_sizes.first(),
            pool.dim
        )));
    }
    if cfg.batch_size == 0 || cfg.lr.is_nan() || cfg.lr < 0.0 {
        return Err(Error::invalid(
            "batch_size must be positive and lr non-negative",
        ));
    }
    let encoder = Encoder::he_uniform(&cfg.layer_sizes, cfg.seed)?;
    let heads = Heads::random(
        HeadMode::PerClass,
        pool.len(),
        encoder.feature_dim(),
        cfg.seed,
    );
    let mut model = ParamSet::new(encoder, heads)?;

    let data: Vec<Sample> = pool
        .classes
        .iter()
        .enumerate()
        .flat_map(|(c, class)| {
            class.examples.iter().map(move |x| Sample {
                x: x.clone(),
                label: c + 1,
            })
        })
        .collect();

    let opt_cfg = OptimizerConfig {
        lr_encoder: cfg.lr,
        lr_heads: cfg.lr,
        decay_epochs: usize::MAX,
        ..OptimizerConfig::default()
    };
    let mut opt = OuterOptimizer::new(opt_cfg, &model)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = seed::derived_rng(cfg.seed, Phase::Pretrain, epoch as u64);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (_, mut grad) = batch_loss_and_grad(&model, &batch)?;
            grad.scale(1.0 / batch.len() as f64);
            opt.step(&mut model, &grad, epoch)?;
        }
    }
    let train_acc = accuracy(&model, &data)?;
    Ok(Pretrained { model, train_acc })
}

/// Pre-trains and keeps only the encoder.
pub fn pretrain_encoder(pool: &ClassPool, cfg: &PretrainConfig) -> Result<Encoder> {
    Ok(pretrain_classifier(pool, cfg)?.model.encoder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::{generate_synthetic_pool, PoolClass};

    #[test]
    fn zero_epochs_gives_fresh_encoder() {
        let pool = generate_synthetic_pool(4, 3, 5, 0.2, 1).unwrap();
        let cfg = PretrainConfig {
            layer_sizes: vec![3, 6],
            epochs: 0,
            seed: 8,
            ..PretrainConfig::default()
        };
        assert_eq!(
            pretrain_encoder(&pool, &cfg).unwrap(),
            Encoder::he_uniform(&[3, 6], 8).unwrap()
        );
    }

    #[test]
    fn separable_pool_is_learned() {
        let pool = generate_synthetic_pool(2, 4, 30, 0.0, 3).unwrap();
        let cfg = PretrainConfig {
            layer_sizes: vec![4, 8],
            epochs: 30,
            lr: 0.05,
            batch_size: 8,
            seed: 1,
        };
        let out = pretrain_classifier(&pool, &cfg).unwrap();
        assert!(out.train_acc > 0.95, "{}", out.train_acc);
        assert_eq!(pretrain_encoder(&pool, &cfg).unwrap(), out.model.encoder);
    }

    #[test]
    fn rejects_empty_or_wrong_split() {
        let empty = ClassPool::new(Vec::<PoolClass>::new(), 3, Split::Base).unwrap();
        let cfg = PretrainConfig {
            layer_sizes: vec![3, 4],
            ..PretrainConfig::default()
        };
        assert!(pretrain_encoder(&empty, &cfg).is_err());
        let mut novel = generate_synthetic_pool(3, 3, 4, 0.1, 0).unwrap();
        novel.split = Split::Novel;
        assert!(pretrain_encoder(&novel, &cfg).is_err());
    }
}
