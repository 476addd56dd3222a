//! Per-subcommand TOML configs. Omitted keys take their defaults, and the
//! effective config is written beside the outputs.

use std::fs;
use std::path::Path;

use rewardnet_core::abm::{AbmConfig, GridSpec};
use rewardnet_core::experiment::{PopulationSpec, ScriptedBehavior};
use rewardnet_core::network::GenConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenFile {
    pub count: usize,
    pub generator: GenConfig,
}

impl Default for GenFile {
    fn default() -> Self {
        GenFile { count: 1000, generator: GenConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbmFile {
    pub model: AbmConfig,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentFile {
    pub populations: usize,
    pub population: PopulationSpec,
    pub scripted: ScriptedBehavior,
}

impl Default for ExperimentFile {
    fn default() -> Self {
        ExperimentFile { populations: 30, population: PopulationSpec::default(), scripted: ScriptedBehavior::default() }
    }
}

/// Reads `path`, or returns defaults when no path was given. A path that
/// does not exist is a usage error; one that does not parse is a config error.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(p) = path else { return Ok(T::default()) };
    if !p.is_file() {
        return Err(CliError::Usage(format!("config file {} not found", p.display())));
    }
    let text = fs::read_to_string(p).map_err(CliError::runtime)?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

pub fn render<T: Serialize>(cfg: &T) -> Result<String, CliError> {
    toml::to_string(cfg).map_err(CliError::runtime)
}
