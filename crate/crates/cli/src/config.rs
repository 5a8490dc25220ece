//! Run configuration for `cavp train`.

use std::fs;
use std::path::{Path, PathBuf};

use cavp_core::cavp::CavpConfig;
use cavp_core::language::{Mode, WordContext};
use cavp_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::failure::{Failure, Outcome, Tag, CONFIG};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default = "CavpConfig::desk")]
    pub cavp: CavpConfig,
    #[serde(default)]
    pub word_context: WordContext,
    #[serde(default)]
    pub train: TrainConfig,
    /// Dataset manifest; relative paths resolve against the config file.
    pub train_manifest: PathBuf,
    pub output_dir: PathBuf,
    /// Words seen fewer times become UNK.
    #[serde(default = "default_min_count")]
    pub min_count: usize,
}

fn default_min_count() -> usize {
    1
}

impl RunConfig {
    /// Parses, resolves relative paths and validates.
    pub fn load(path: &Path) -> Outcome<Self> {
        let text = fs::read_to_string(path).or_code(CONFIG, format!("cannot read config {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text).or_code(CONFIG, format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.train_manifest, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Outcome {
        self.cavp.validate()?;
        self.train.validate()?;
        if self.min_count == 0 {
            return Err(Failure::config("min_count must be at least 1"));
        }
        Ok(())
    }

    /// Caps the total epoch count, truncating the XE phase first.
    pub fn limit_epochs(&mut self, total: usize) {
        self.train.xe.epochs = self.train.xe.epochs.min(total);
        self.train.rl.epochs = self.train.rl.epochs.min(total - self.train.xe.epochs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> serde_json::Result<RunConfig> {
        serde_json::from_str(json)
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse(r#"{"mode": "sentence", "train_manifest": "m.json", "output_dir": "out"}"#).unwrap();
        assert_eq!(cfg.cavp, CavpConfig::desk());
        assert_eq!(cfg.train, TrainConfig::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(r#"{"mode": "sentence", "train_manifest": "m", "output_dir": "o", "lr": 1}"#).is_err());
        assert!(parse(r#"{"mode": "sentence", "train_manifest": "m", "output_dir": "o", "train": {"epochs": 1}}"#).is_err());
    }

    #[test]
    fn epoch_limit_truncates_in_phase_order() {
        let mut cfg = parse(r#"{"mode": "sentence", "train_manifest": "m", "output_dir": "o"}"#).unwrap();
        cfg.train.xe.epochs = 5;
        cfg.train.rl.epochs = 4;
        cfg.limit_epochs(7);
        assert_eq!((cfg.train.xe.epochs, cfg.train.rl.epochs), (5, 2));
        cfg.limit_epochs(0);
        assert_eq!((cfg.train.xe.epochs, cfg.train.rl.epochs), (0, 0));
    }
}
