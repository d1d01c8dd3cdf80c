//! Run configuration shared by all subcommands.
//!
//! A config file (JSON, same schema as [`RunConfig`]) is optional; command
//! line flags override its values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use todsim_core::generator::protocol::Fallback;
use todsim_core::goal::GoalSamplerConfig;
use todsim_core::harness::{BatchConfig, DialogueConfig, ScriptedSystemConfig};
use todsim_core::rl::{PpoConfig, RewardConfig};

use crate::error::CliError;

pub const DEFAULT_ONTOLOGY: &str = "data/ontology/multiwoz.json";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedSystem {
    pub name: String,
    #[serde(flatten)]
    pub config: ScriptedSystemConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedUser {
    pub name: String,
    /// `rule`, `stochastic`, `stochastic:<checkpoint>` or `external:<endpoint>`.
    pub generator: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ontology: PathBuf,
    pub seed: u64,
    /// Seeds for multi-seed experiments (cross-eval, cross-reward).
    pub seeds: Vec<u64>,
    pub dialogues: usize,
    pub goals: GoalSamplerConfig,
    pub generator: String,
    pub system: ScriptedSystemConfig,
    pub systems: Vec<NamedSystem>,
    pub users: Vec<NamedUser>,
    pub max_turns: usize,
    pub max_actions: usize,
    /// Training reward: `r1`, `r2` or `r1_prose`.
    pub reward: String,
    /// Read r1 as `-5 + m` instead of `-5 m`.
    pub r1_prose_reading: bool,
    pub ppo: PpoConfig,
    pub external_timeout_ms: u64,
    pub fallback: Fallback,
    /// Worker threads for dialogue batches; 0 picks the number of cores.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DialogueConfig::default();
        Self {
            ontology: PathBuf::from(DEFAULT_ONTOLOGY),
            seed: 0,
            seeds: vec![0, 1, 2, 3],
            dialogues: 100,
            goals: GoalSamplerConfig::default(),
            generator: "rule".into(),
            system: ScriptedSystemConfig::default(),
            systems: vec![
                NamedSystem {
                    name: "clean".into(),
                    config: ScriptedSystemConfig::default(),
                },
                NamedSystem {
                    name: "noisy".into(),
                    config: ScriptedSystemConfig {
                        p_understand: 0.7,
                        ..Default::default()
                    },
                },
                NamedSystem {
                    name: "failing".into(),
                    config: ScriptedSystemConfig {
                        failure_rate: 0.3,
                        ..Default::default()
                    },
                },
            ],
            users: vec![
                NamedUser {
                    name: "rule".into(),
                    generator: "rule".into(),
                },
                NamedUser {
                    name: "stochastic".into(),
                    generator: "stochastic".into(),
                },
                NamedUser {
                    name: "terse".into(),
                    generator: "rule-single".into(),
                },
            ],
            max_turns: d.max_turns,
            max_actions: d.max_actions,
            reward: "r1".into(),
            r1_prose_reading: false,
            ppo: PpoConfig::default(),
            external_timeout_ms: DEFAULT_TIMEOUT_MS,
            fallback: Fallback::Rule,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::input(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.system.validate().map_err(|e| CliError::input(e.to_string()))?;
        for s in &self.systems {
            s.config.validate().map_err(|e| CliError::input(format!("system {}: {e}", s.name)))?;
        }
        if self.max_turns == 0 || self.max_actions == 0 {
            return Err(CliError::input("max_turns and max_actions must be positive"));
        }
        if !(self.ppo.clip > 0.0 && self.ppo.clip < 1.0) {
            return Err(CliError::input("ppo.clip must lie in (0, 1)"));
        }
        if !(self.ppo.gamma > 0.0 && self.ppo.gamma <= 1.0) {
            return Err(CliError::input("ppo.gamma must lie in (0, 1]"));
        }
        self.reward_config(&self.reward)?;
        Ok(())
    }

    /// Resolves a reward name, honouring `r1_prose_reading`.
    pub fn reward_config(&self, name: &str) -> Result<RewardConfig, CliError> {
        if name == "r1" && self.r1_prose_reading {
            return Ok(RewardConfig::r1_prose());
        }
        RewardConfig::named(name).ok_or_else(|| CliError::input(format!("unknown reward {name:?}; expected r1, r2 or r1_prose")))
    }

    pub fn dialogue(&self) -> DialogueConfig {
        let mut rewards = vec![
            ("r1".to_string(), self.reward_config("r1").expect("r1 is known")),
            ("r2".to_string(), RewardConfig::r2()),
        ];
        if self.r1_prose_reading {
            rewards[0].0 = "r1_prose".into();
        }
        DialogueConfig {
            max_turns: self.max_turns,
            max_actions: self.max_actions,
            rewards,
        }
    }

    pub fn batch(&self, system: &ScriptedSystemConfig, seed: u64) -> BatchConfig {
        BatchConfig {
            seed,
            goals: self.goals,
            system: system.clone(),
            dialogue: self.dialogue(),
        }
    }

    /// Short content hash. Settings that cannot change results (output
    /// directory, thread count) are left out.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&Self { threads: 0, ..self.clone() }).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 9, "system": {"p_understand": 0.5}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.system.p_understand, 0.5);
        assert_eq!(c.system.failure_rate, 0.0);
        assert_eq!(c.max_turns, 40);
        assert_ne!(c.hash(), RunConfig::default().hash());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = RunConfig::default();
        c.system.p_understand = 1.5;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.reward = "r9".into();
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 1}"#).is_err());
    }
}
