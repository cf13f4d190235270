//! Flat TOML configuration: one `key = value` per line, keys named after
//! the fields of [`ExperimentConfig`]. Missing keys take their defaults and
//! unknown keys are rejected.

use std::path::Path;

use clocksync_core::experiment::ExperimentConfig;

use crate::HarnessError;

pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
