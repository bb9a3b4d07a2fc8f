//! Run configuration: a JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::episodes::EpisodeSpec;
use crate::error::Result;
use crate::maml::{InnerLoopConfig, PretrainConfig, TrainConfig, Variant};
use crate::metatest::Strategy;
use crate::network::OptimizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub base_classes: usize,
    pub validation_classes: usize,
    pub novel_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub sigma: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            base_classes: 50,
            validation_classes: 0,
            novel_classes: 10,
            dim: 16,
            per_class: 40,
            sigma: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden widths between the input and the feature layer.
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: vec![32],
            feature_dim: 32,
        }
    }
}

impl ModelSection {
    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.feature_dim))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let d = PretrainConfig::default();
        PretrainSection {
            epochs: d.epochs,
            lr: d.lr,
            batch_size: d.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub variant: Variant,
    pub epochs: usize,
    pub tasks_per_epoch: usize,
    pub task_batch_size: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub steps: usize,
    pub alpha: f64,
    pub freeze_encoder: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            variant: d.variant,
            epochs: d.epochs,
            tasks_per_epoch: d.tasks_per_epoch,
            task_batch_size: d.task_batch_size,
            n_way: d.spec.n_way,
            k_shot: d.spec.k_shot,
            q_query: d.spec.q_query,
            steps: d.inner.steps,
            alpha: d.inner.alpha,
            freeze_encoder: d.inner.freeze_encoder,
            optimizer: d.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub strategy: Strategy,
    pub tasks: usize,
    /// Label classes by ascending id; `None` follows the checkpoint's variant.
    pub sort_labels: Option<bool>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            strategy: Strategy::None,
            tasks: 1000,
            sort_labels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub spread_tasks: usize,
    pub curve_tasks: usize,
    pub curve_max_steps: usize,
    pub sweep_alphas: Vec<f64>,
    pub sweep_steps: Vec<usize>,
    pub sweep_eval_tasks: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            spread_tasks: 200,
            curve_tasks: 1000,
            curve_max_steps: 30,
            sweep_alphas: vec![0.001, 0.01, 0.05, 0.1],
            sweep_steps: vec![1, 5, 10, 15, 20],
            sweep_eval_tasks: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Directory holding `splits.json` and the pool files.
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Encoder checkpoint to start meta-training from.
    pub init: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Results ledger; defaults to `<out>/results.csv`.
    pub ledger: Option<PathBuf>,
}

/// Effective settings of one command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub data: DataSection,
    pub model: ModelSection,
    pub pretrain: PretrainSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub analysis: AnalysisSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn spec(&self) -> Result<EpisodeSpec> {
        EpisodeSpec::new(self.train.n_way, self.train.k_shot, self.train.q_query)
    }

    pub fn inner(&self) -> Result<InnerLoopConfig> {
        let cfg = InnerLoopConfig {
            steps: self.train.steps,
            alpha: self.train.alpha,
            freeze_encoder: self.train.freeze_encoder,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            variant: self.train.variant,
            epochs: self.train.epochs,
            tasks_per_epoch: self.train.tasks_per_epoch,
            task_batch_size: self.train.task_batch_size,
            spec: self.spec()?,
            inner: self.inner()?,
            optimizer: self.train.optimizer,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
