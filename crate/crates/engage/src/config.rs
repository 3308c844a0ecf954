//! One config file for the whole pipeline, with per-stage sections.
//! Unknown keys are rejected; every artifact header echoes a digest of the
//! effective config so stage mismatches are caught early.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::GeneratorConfig;
use crate::error::{EngageError, Result};
use crate::features::StoreConfig;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SketchConfig {
    pub depth: usize,
    pub width: usize,
    pub seed: u64,
    pub density_aware: bool,
}

impl Default for SketchConfig {
    fn default() -> Self {
        // sketch block width depth*width = 1024
        SketchConfig {
            depth: 16,
            width: 64,
            seed: 0,
            density_aware: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    /// "day-window" or "k-random"
    pub mode: String,
    pub k: u32,
    pub seed: u64,
    /// Share of the evaluation-analog chunk held out for local evaluation.
    pub holdout_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            mode: "day-window".into(),
            k: 10,
            seed: 0,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Popularity quantile group count.
    pub groups: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { groups: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub warmup: usize,
    pub predictions: usize,
    /// p95 budget in milliseconds.
    pub p95_budget_ms: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            warmup: 1000,
            predictions: 10_000,
            p95_budget_ms: 6.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub sketch: SketchConfig,
    pub store: StoreConfig,
    pub partition: PartitionConfig,
    pub model: ModelConfig,
    pub metrics: MetricsConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| EngageError::io(path, e))?;
        toml::from_str(&text).map_err(|e| EngageError::Config(format!("{}: {e}", path.display())))
    }

    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short digest of the effective config, echoed into artifact headers.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_toml().as_bytes());
        let hash = hasher.finalize();
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Header echo line for output artifacts.
    pub fn echo(&self) -> String {
        format!("cfg {}", self.digest())
    }
}

/// Check a previously written artifact's `#cfg` line against the current
/// config; a mismatch means the stages were run with different settings.
pub fn check_config_echo(path: &Path, expected: &RunConfig) -> Result<()> {
    // only the head matters, and some artifacts carry a binary payload
    use std::io::Read as _;
    let mut head = vec![0u8; 4096];
    let n = std::fs::File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(|e| EngageError::io(path, e))?;
    head.truncate(n);
    let text = String::from_utf8_lossy(&head);
    for line in text.lines().take(20) {
        if let Some(d) = line.strip_prefix("#cfg ") {
            if d.trim() != expected.digest() {
                return Err(EngageError::Config(format!(
                    "{}: config digest {} does not match current config {}",
                    path.display(),
                    d.trim(),
                    expected.digest()
                )));
            }
            return Ok(());
        }
    }
    Ok(())
}
