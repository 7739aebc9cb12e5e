use std::fmt;
use std::path::Path;

use evrecon::eventsim::{SceneConfig, SimParams};
use evrecon::pipeline::RunConfig;
use serde::Deserialize;

/// Settings shared through `--config`; every section is optional and
/// command-line flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub scene: Option<SceneConfig>,
    pub sim: Option<SimParams>,
    pub run: Option<RunConfig>,
}

/// A bad configuration file or flag combination (exit code 4).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Parses a TOML or JSON (by `.json` extension) document.
pub fn parse_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    if is_json(path) {
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, ConfigError> {
    path.map_or_else(|| Ok(FileConfig::default()), parse_file)
}
