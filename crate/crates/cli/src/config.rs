use std::path::{Path, PathBuf};

use anyhow::Context;
use rescaviar::backtest::BootstrapConfig;
use rescaviar::forecast::RollingConfig;
use rescaviar::market::ColumnMap;
use rescaviar::mcmc::McmcConfig;
use rescaviar::simulate::CovariateConfig;
use rescaviar::Variant;
use serde::Deserialize;

use crate::UsageError;

pub const DEFAULT_ALPHA: f64 = 0.025;

/// Contents of a `--config` TOML file. Every section is optional; command
/// line flags override whatever is set here.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data: DataSection,
    pub model: ModelSection,
    pub mcmc: McmcConfig,
    pub rolling: RollingConfig,
    pub bootstrap: BootstrapConfig,
    pub murphy: MurphySection,
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub input: Option<PathBuf>,
    pub market: Option<String>,
    /// Row count or last in-sample date.
    pub split: Option<String>,
    pub columns: ColumnMap,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Option<Variant>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MurphySection {
    pub grid_points: usize,
}

impl Default for MurphySection {
    fn default() -> Self {
        Self { grid_points: 501 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub len: Option<usize>,
    pub beta: Option<Vec<f64>>,
    pub gamma: Option<[f64; 3]>,
    pub q0: Option<f64>,
    pub es0: Option<f64>,
    pub covariates: CovariateConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }
}
