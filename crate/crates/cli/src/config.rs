//! File-level run configuration. Flags override file values, file values
//! override built-in defaults.

use std::path::Path;

use duet_core::data::Scenario;
use duet_core::diffusion::{DEFAULT_GUIDANCE, DEFAULT_MASK_RATE};
use duet_core::metrics::MetricConfig;
use duet_core::training::TrainConfig;
use duet_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenDataSettings {
    pub scenario: String,
    pub clips: usize,
    pub frames: usize,
    pub seed: u64,
}

impl Default for GenDataSettings {
    fn default() -> Self {
        Self { scenario: "mirror".into(), clips: 8, frames: 900, seed: 0 }
    }
}

impl GenDataSettings {
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        if self.scenario == "all" {
            Ok(Scenario::ALL.to_vec())
        } else {
            Ok(vec![self.scenario.parse()?])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSettings {
    pub seed: u64,
    pub guidance: f64,
    pub mask_rate: f64,
    /// Overrides the checkpoint's step count when set.
    pub steps: Option<usize>,
    /// Overrides each record's own label when set.
    pub text: Option<String>,
    pub warmup: String,
    pub max_windows: Option<usize>,
}

impl Default for SampleSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            guidance: DEFAULT_GUIDANCE,
            mask_rate: DEFAULT_MASK_RATE,
            steps: None,
            text: None,
            warmup: "unconditioned".into(),
            max_windows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct StreamSettings {
    pub sample: SampleSettings,
    pub realtime: bool,
    /// Queue capacity of the threaded pipeline; 0 runs on one thread.
    pub queue: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub gen_data: GenDataSettings,
    pub train: TrainConfig,
    pub sample: SampleSettings,
    pub stream: StreamSettings,
    pub evaluate: MetricConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Validation(format!("cannot serialize config: {e}")))
    }

    /// Writes the effective configuration next to a command's outputs.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.to_toml()?)?;
        Ok(())
    }
}
