//! Run configuration: one TOML file covering topology, noise, timing, slot
//! and arrival parameters plus the scheduler choice. A single master seed
//! derives every component seed through labeled hashing, so each stream
//! stays independently reproducible.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SlotConfig;
use crate::nettopo::WsParams;
use crate::qlink::{NoiseParams, TimingParams};
use crate::rngutil;
use crate::traffic::ArrivalModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config encode error: {0}")]
    Encode(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologySection {
    pub node_count: usize,
    pub ring_degree: usize,
    pub rewire_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalSection {
    pub low: u32,
    pub high: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub master_seed: u64,
    /// "fifo" | "greedy" | "pfair" | "dqn:delay" | "dqn:fair".
    pub scheduler: String,
    pub lut_path: PathBuf,
    /// Directory holding trained model files, needed for dqn:* schedulers.
    #[serde(default)]
    pub model_dir: Option<PathBuf>,
    pub topology: TopologySection,
    pub noise: NoiseParams,
    pub timing: TimingParams,
    pub slot: SlotConfig,
    pub arrivals: ArrivalSection,
}

impl RunConfig {
    /// Medium-load preset: 2e5 ns slots, arrivals U[0,5].
    pub fn medium(master_seed: u64) -> Self {
        Self {
            master_seed,
            scheduler: "fifo".into(),
            lut_path: PathBuf::from("lut.json"),
            model_dir: None,
            topology: TopologySection {
                node_count: 10,
                ring_degree: 3,
                rewire_prob: 0.6,
            },
            noise: NoiseParams::default(),
            timing: TimingParams::default(),
            slot: SlotConfig::default(),
            arrivals: ArrivalSection { low: 0, high: 5 },
        }
    }

    /// Low-load preset: 5e5 ns slots, same arrival bounds.
    pub fn low_load(master_seed: u64) -> Self {
        let mut cfg = Self::medium(master_seed);
        cfg.slot.slot_interval_ns = 500_000;
        cfg
    }

    pub fn preset(name: &str, master_seed: u64) -> Result<Self, ConfigError> {
        match name {
            "medium" => Ok(Self::medium(master_seed)),
            "low" => Ok(Self::low_load(master_seed)),
            other => Err(ConfigError::Invalid(format!(
                "unknown preset {other:?} (expected medium | low)"
            ))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ws_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.noise
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.timing
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.slot
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.arrival_model(0)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match self.scheduler.as_str() {
            "fifo" | "greedy" | "pfair" => Ok(()),
            "dqn:delay" | "dqn:fair" => {
                if self.model_dir.is_none() {
                    Err(ConfigError::Invalid(
                        "dqn schedulers need model_dir".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            other => Err(ConfigError::Invalid(format!(
                "unknown scheduler {other:?}"
            ))),
        }
    }

    pub fn ws_params(&self) -> WsParams {
        WsParams {
            node_count: self.topology.node_count,
            ring_degree: self.topology.ring_degree,
            rewire_prob: self.topology.rewire_prob,
            seed: rngutil::derive_seed(self.master_seed, "config.topology", &[]),
        }
    }

    /// Arrival stream for one replicate; replicate 0 is the plain run.
    pub fn arrival_model(&self, replicate: u64) -> ArrivalModel {
        ArrivalModel {
            low: self.arrivals.low,
            high: self.arrivals.high,
            seed: rngutil::derive_seed(self.master_seed, "config.traffic", &[replicate]),
        }
    }

    pub fn attempt_seed(&self, replicate: u64) -> u64 {
        rngutil::derive_seed(self.master_seed, "config.attempts", &[replicate])
    }

    pub fn sched_seed(&self, replicate: u64) -> u64 {
        rngutil::derive_seed(self.master_seed, "config.sched", &[replicate])
    }

    pub fn lut_seed(&self) -> u64 {
        rngutil::derive_seed(self.master_seed, "config.lut", &[])
    }

    pub fn train_seed(&self, k: u64) -> u64 {
        rngutil::derive_seed(self.master_seed, "config.train", &[k])
    }
}
