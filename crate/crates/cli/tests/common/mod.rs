#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sleeve_cli::Config;
use sleeve_core::learner::EnsembleConfig;
use sleeve_core::psychophysics::{psychometric, write_tally_csv, TallyPoint, STUDY_TESTS_PSI};
use sleeve_core::session::SessionConfig;
use sleeve_core::Pressure;

/// Small learner so end-to-end tests finish in seconds.
pub fn quick_config() -> Config {
    Config {
        session: SessionConfig {
            ensemble: EnsembleConfig {
                epochs: 300,
                finetune_epochs: 100,
                ..EnsembleConfig::default()
            },
            ..SessionConfig::default()
        },
        ..Config::default()
    }
}

pub fn write_config(dir: &Path, config: &Config) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

/// Tally file holding the noise-free curve for steepness `k` at the study pressures.
pub fn exact_tally(dir: &Path, name: &str, k: f64) -> PathBuf {
    let points: Vec<TallyPoint> = STUDY_TESTS_PSI
        .iter()
        .filter(|&&p| p != 2.0)
        .map(|&p| TallyPoint {
            pressure: Pressure::psi(p),
            percent: psychometric(p, 2.0, k),
            trials: 10,
        })
        .collect();
    let path = dir.join(format!("{name}.csv"));
    write_tally_csv(&points, std::fs::File::create(&path).unwrap()).unwrap();
    path
}
