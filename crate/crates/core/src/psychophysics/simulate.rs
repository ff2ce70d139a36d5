//! Synthetic subjects that answer according to a known logistic curve.

use rand::Rng;

use super::fit::psychometric;
use super::ledger::ResponseLedger;
use super::schedule::{Slot, TrialKind, TrialSchedule};
use crate::types::{streams, Seed};

/// A simulated observer with steepness `k` and a preference for the second
/// interval on indistinguishable pairs.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSubject {
    pub k: f64,
    /// Probability of answering "second" on a bias probe.
    pub second_bias: f64,
}

impl SyntheticSubject {
    pub fn new(k: f64) -> Self {
        SyntheticSubject { k, second_bias: 0.5 }
    }

    /// Answers every trial with one Bernoulli draw, in schedule order.
    pub fn respond(&self, schedule: &TrialSchedule, seed: Seed) -> ResponseLedger {
        let mut rng = seed.derive(streams::RESPONSES).rng();
        let p0 = schedule.reference.as_psi();
        let mut ledger = ResponseLedger::new(schedule.clone());
        for trial in &schedule.trials {
            let chose_second = match trial.kind {
                TrialKind::Test { test_slot } => {
                    let p = trial.test_pressure().map(|p| p.as_psi()).unwrap_or(p0);
                    let chose_test = rng.gen_bool(psychometric(p, p0, self.k) / 100.0);
                    chose_test == (test_slot == Slot::Second)
                }
                TrialKind::BiasProbe => rng.gen_bool(self.second_bias),
            };
            ledger
                .record(trial.id, chose_second)
                .expect("ids come from the schedule");
        }
        ledger
    }
}
