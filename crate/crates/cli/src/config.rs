use std::path::{Path, PathBuf};

use clepsydra::analytics::SecurityParams;
use clepsydra::attack::{AttackerModel, PppConfig};
use clepsydra::simkit::{RunConfig, WorkloadSpec};
use clepsydra::CacheConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "CLEPSYDRA_SEED";

/// Everything a subcommand may need. Every field has a default, so `{}` is
/// a valid config: the 1 MiB, 8-way Clepsydra LLC for simulation and
/// attacks, and the 8 MiB, 16-way cache for the closed-form analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub cache: CacheConfig,
    pub analysis: SecurityParams,
    pub attacker: AttackConfig,
    pub workload: WorkloadSpec,
    pub run: RunConfig,
    pub seed: u64,
    pub output: OutputPaths,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            cache: CacheConfig::default(),
            analysis: SecurityParams::reference(),
            attacker: AttackConfig::default(),
            workload: WorkloadSpec::default(),
            run: RunConfig::default(),
            seed: 0,
            output: OutputPaths::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub model: AttackerModel,
    pub ppp: PppConfig,
    /// Victim address whose eviction set is built.
    pub target: u64,
    /// Eviction probability the set should reach.
    pub p_e_goal: f64,
    /// Trials used to measure the eviction rate of a finished set.
    pub eviction_trials: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            model: AttackerModel::default(),
            ppp: PppConfig::default(),
            target: 0x1234_5640,
            p_e_goal: 0.9,
            eviction_trials: 1000,
        }
    }
}

/// Optional extra outputs; the main CSV goes to `--out` or stdout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub stats: Option<PathBuf>,
    pub lifetimes: Option<PathBuf>,
    pub periods: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// `--seed` beats `CLEPSYDRA_SEED`, which beats the config file.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<(), CliError> {
        if let Some(s) = flag {
            self.seed = s;
        } else if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an integer")))?;
        }
        Ok(())
    }
}
