use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::corpus::OovPolicy;
use crate::model::{ModelConfig, Variant};

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub dataset: PathBuf,
    /// Held-out split. Without it the dataset is split 80/20.
    pub test_dataset: Option<PathBuf>,
    pub parses: Option<PathBuf>,
    pub test_parses: Option<PathBuf>,
    pub embeddings: PathBuf,
    pub conceptnet: PathBuf,
    pub senticnet: PathBuf,
    pub lexicon: PathBuf,
}

impl DataPaths {
    fn all_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut v = vec![
            &mut self.dataset,
            &mut self.embeddings,
            &mut self.conceptnet,
            &mut self.senticnet,
            &mut self.lexicon,
        ];
        v.extend(self.test_dataset.as_mut());
        v.extend(self.parses.as_mut());
        v.extend(self.test_parses.as_mut());
        v
    }

    fn all(&self) -> Vec<(&'static str, &PathBuf)> {
        let mut v = vec![
            ("dataset", &self.dataset),
            ("embeddings", &self.embeddings),
            ("conceptnet", &self.conceptnet),
            ("senticnet", &self.senticnet),
            ("lexicon", &self.lexicon),
        ];
        v.extend(self.test_dataset.as_ref().map(|p| ("test_dataset", p)));
        v.extend(self.parses.as_ref().map(|p| ("parses", p)));
        v.extend(self.test_parses.as_ref().map(|p| ("test_parses", p)));
        v
    }

    pub fn resolve_against(&mut self, base: &Path) {
        for p in self.all_mut() {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        }
    }

    /// Every configured path must name a readable file.
    pub fn check_readable(&self) -> Result<(), TrainError> {
        for (field, p) in self.all() {
            if p.as_os_str().is_empty() {
                return Err(TrainError::Config(format!("paths.{field} is not set")));
            }
            std::fs::File::open(p).map_err(|e| TrainError::Data(format!("{field} {}: {e}", p.display())))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Run seed. Overrides `model.seed`.
    pub seed: u64,
    /// Stop after this many epochs without a lower mean training loss.
    pub patience: Option<usize>,
    pub variant: Variant,
    pub oov: OovPolicy,
    pub paths: DataPaths,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            lr: 0.001,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            patience: None,
            variant: Variant::Full,
            oov: OovPolicy::default(),
            paths: DataPaths::default(),
        }
    }
}

impl TrainConfig {
    /// Reads JSON or TOML, chosen by extension (`.toml` is TOML, anything
    /// else JSON). Relative data paths are resolved against the file.
    pub fn from_file(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))?;
        let mut cfg: TrainConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(base) = path.parent() {
            cfg.paths.resolve_against(base);
        }
        Ok(cfg)
    }

    /// Model configuration actually trained: the variant applied and the
    /// run seed copied in.
    pub fn effective_model(&self) -> ModelConfig {
        let mut m = crate::model::ablation_variant(&self.model, self.variant);
        m.seed = self.seed;
        m
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.effective_model().validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}
