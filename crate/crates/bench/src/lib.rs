//! Shared fixtures for the benchmarks.

use sleeve_core::learner::{bootstrap, Ensemble, EnsembleConfig, TrainingSet};
use sleeve_core::session::task::bundled;
use sleeve_core::session::Task;
use sleeve_core::Seed;

/// Small learner so a training benchmark iteration stays under a second.
pub fn small_config() -> EnsembleConfig {
    EnsembleConfig {
        epochs: 200,
        finetune_epochs: 50,
        ..EnsembleConfig::default()
    }
}

pub fn trained(task: &Task) -> (Ensemble, TrainingSet) {
    bootstrap(task, &small_config(), Seed(1)).expect("bundled task trains")
}

pub fn cleaning() -> Task {
    bundled::cleaning()
}
