//! Run configuration: a strict JSON file that is either a full run
//! description or a bare highway scenario.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use rail_core::io::json_digest;
use rail_core::learners::{BcConfig, RailConfig};
use rail_core::sim::{ExpertRules, HighwayConfig};

use crate::Usage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub name: String,
    pub env: HighwayConfig,
    pub expert: ExpertRules,
    pub rail: RailConfig,
    pub bc: BcConfig,
    pub demos: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// RAIL checkpoints are written every this many iterations.
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            env: HighwayConfig::default(),
            expert: ExpertRules::default(),
            rail: RailConfig::default(),
            bc: BcConfig::default(),
            demos: None,
            output: None,
            checkpoint_every: 50,
        }
    }
}

const RUN_KEYS: [&str; 8] = ["name", "env", "expert", "rail", "bc", "demos", "output", "checkpoint_every"];

impl RunConfig {
    /// Loads a config file. Objects using any run-level key are parsed as a
    /// full run config, anything else as a bare highway config. Unknown keys
    /// are rejected either way. A missing path gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Usage(format!("config {} is not JSON: {e}", path.display())))?;
        let is_run = value.as_object().is_some_and(|o| o.keys().any(|k| RUN_KEYS.contains(&k.as_str())));
        let parsed = if is_run {
            serde_json::from_value::<RunConfig>(value)
        } else {
            serde_json::from_value::<HighwayConfig>(value).map(|env| RunConfig { env, ..RunConfig::default() })
        };
        let cfg = parsed.map_err(|e| Usage(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate().context("invalid env section")?;
        self.rail.validate().context("invalid rail section")?;
        if self.checkpoint_every == 0 {
            return Err(Usage("checkpoint_every must be at least 1".into()).into());
        }
        Ok(())
    }

    /// Content hash of everything that determines a run's results. The
    /// worker count is left out because results do not depend on it.
    pub fn digest(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.rail.workers = 1;
        canonical.output = None;
        Ok(json_digest(&canonical)?)
    }
}

/// Seed precedence: `RAIL_SEED`, then the flag, then the config value.
pub fn resolve_seed(flag: Option<u64>, config: u64) -> Result<u64> {
    match std::env::var("RAIL_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| Usage(format!("RAIL_SEED={v:?} is not an unsigned integer")).into()),
        Err(std::env::VarError::NotPresent) => Ok(flag.unwrap_or(config)),
        Err(e) => Err(Usage(format!("RAIL_SEED: {e}")).into()),
    }
}
