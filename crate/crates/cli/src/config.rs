//! The `--config` file: one JSON object shared by every subcommand.
//!
//! ```json
//! {"ensemble": {"epochs": 1500}, "plant": {...}, "control": {...},
//!  "probe_poses": 200, "perception": {"interval_s": 1.5}, "telemetry_hz": 20}
//! ```
//!
//! Every field is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sleeve_core::live::PerceptionConfig;
use sleeve_core::session::SessionConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    #[serde(flatten)]
    pub session: SessionConfig,
    pub perception: PerceptionConfig,
    pub telemetry_hz: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            session: SessionConfig::default(),
            perception: PerceptionConfig::default(),
            telemetry_hz: 20.0,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("config", format!("cannot read config file {}: {e}", path.display())))?;
        let config: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
        if !(config.telemetry_hz > 0.0 && config.telemetry_hz <= 1000.0) {
            return Err(CliError::new("config", "telemetry_hz must be in (0, 1000]"));
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_keep_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"ensemble": {"epochs": 10}, "telemetry_hz": 50}"#).unwrap();
        let c = Config::load(Some(&path)).unwrap();
        assert_eq!(c.session.ensemble.epochs, 10);
        assert_eq!(c.session.ensemble.members, 5);
        assert_eq!(c.telemetry_hz, 50.0);
        assert_eq!(c.perception, PerceptionConfig::default());
        assert_eq!(Config::load(None).unwrap(), Config::default());
    }

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let back: Config = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
