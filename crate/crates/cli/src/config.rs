//! Declarative run configuration.
//!
//! The file is flat TOML: one `key = value` per line, keys spelled like the
//! long flags (`perturb-astar = 0.01`, `x-grid = "50:130:81"`). Values given
//! on the command line take precedence.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::args::Format;
use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub r: Option<f64>,
    pub sigma: Option<f64>,
    pub strike: Option<f64>,
    pub drawdown: Option<f64>,
    pub x: Option<f64>,
    pub xbar: Option<f64>,
    pub paths: Option<u64>,
    pub dt: Option<f64>,
    pub tmax: Option<f64>,
    pub seed: Option<u64>,
    pub strides: Option<Vec<u64>>,
    pub figure: Option<u8>,
    pub x_grid: Option<String>,
    pub xbar_grid: Option<String>,
    pub r_grid: Option<String>,
    pub sigma_grid: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub perturb_astar: Option<f64>,
    pub with_mc: Option<bool>,
    pub exercise_at: Option<f64>,
    pub drawdown_only: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text).map_err(|reason| CliError::Config {
            path: path.display().to_string(),
            reason,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn load_optional(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
