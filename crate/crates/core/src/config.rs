//! Run configuration shared by the command-line subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SyntheticConfig;
use crate::error::{Error, Result};
use crate::io::read_to_string;
use crate::policy::ModelDims;
use crate::reward::RewardParams;
use crate::trainer::{PPOConfig, SFTConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Directory holding train/dev/test JSONL and facts.jsonl.
    pub data: PathBuf,
    /// Fact store; defaults to `facts.jsonl` under `data`.
    pub facts: Option<PathBuf>,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: PathBuf::from("data"),
            facts: None,
            checkpoints: PathBuf::from("checkpoints"),
            reports: PathBuf::from("reports"),
        }
    }
}

impl Paths {
    pub fn split(&self, name: &str) -> PathBuf {
        self.data.join(format!("{name}.jsonl"))
    }

    pub fn facts_file(&self) -> PathBuf {
        self.facts.clone().unwrap_or_else(|| self.data.join("facts.jsonl"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    pub features: ModelDims,
    pub reward: RewardParams,
    pub sft: SFTConfig,
    pub ppo: PPOConfig,
    pub synthetic: SyntheticConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::from_json(&read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.reward.validate()?;
        self.sft.validate()?;
        self.ppo.validate()?;
        self.synthetic.validate()
    }

    /// Fails unless every listed input exists.
    pub fn require(paths: &[&Path]) -> Result<()> {
        for p in paths {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let c = RunConfig::from_json(r#"{"ppo": {"iterations": 3}, "seed": 7}"#).unwrap();
        assert_eq!(c.ppo.iterations, 3);
        assert_eq!(c.ppo.num_rollouts, 256);
        assert_eq!(c.sft.epochs, 6);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(RunConfig::from_json(r#"{"ppo": {"gamma": 1.5}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"features": {"hidden": 0}}"#).is_err());
        assert!(RunConfig::from_json("not json").is_err());
    }
}
