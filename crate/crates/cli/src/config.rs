use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use otnas_core::dataio::SyntheticTaskSpec;
use otnas_core::supernet::{SearchSpaceConfig, TrainConfig};
use otnas_core::zoo::ZooIndex;
use otnas_core::{Error, OtSettings, Result};

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_threshold() -> f64 {
    otnas_core::pipeline::DEFAULT_SPEEDUP_THRESHOLD
}

/// Experiment configuration. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub zoo_root: PathBuf,
    pub dataset_dir: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Synthetic tasks written by `gen-data` when no spec file is given.
    #[serde(default)]
    pub tasks: Vec<SyntheticTaskSpec>,
    #[serde(default)]
    pub ot: OtSettings,
    #[serde(default)]
    pub search_space: SearchSpaceConfig,
    /// Fine-tuning and scratch budget.
    #[serde(default)]
    pub train: TrainConfig,
    /// Budget for zoo and leave-one-out pretraining; defaults to `train`.
    #[serde(default)]
    pub pretrain: Option<TrainConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_threshold")]
    pub speedup_threshold: f64,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: CliConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.zoo_root, &mut config.dataset_dir, &mut config.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.ot.validate()?;
        self.search_space.validate()?;
        self.train.validate()?;
        if let Some(p) = &self.pretrain {
            p.validate()?;
        }
        for t in &self.tasks {
            t.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if !(self.speedup_threshold > 0.0 && self.speedup_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "speedup_threshold must be in (0, 1], got {}",
                self.speedup_threshold
            )));
        }
        Ok(())
    }

    pub fn zoo_root(&self) -> PathBuf {
        ZooIndex::default_root(&self.zoo_root)
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        self.pretrain.clone().unwrap_or_else(|| self.train.clone())
    }

    pub fn train_with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train.clone() }
    }
}
