use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{streams, Pressure, Seed};

/// Which presentation interval ("Pressure 1" or "Pressure 2") holds a stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrialKind {
    /// Reference paired against a test pressure; `test_slot` says which
    /// interval carried the test.
    Test { test_slot: Slot },
    /// Reference against itself, asked only to measure interval bias.
    BiasProbe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: u32,
    pub first: Pressure,
    pub second: Pressure,
    pub kind: TrialKind,
}

impl Trial {
    pub fn test_pressure(&self) -> Option<Pressure> {
        match self.kind {
            TrialKind::Test { test_slot: Slot::First } => Some(self.first),
            TrialKind::Test { test_slot: Slot::Second } => Some(self.second),
            TrialKind::BiasProbe => None,
        }
    }

    /// Whether answering `chose_second` means the test stimulus was picked as higher.
    pub fn chose_test(&self, chose_second: bool) -> Option<bool> {
        match self.kind {
            TrialKind::Test { test_slot } => Some((test_slot == Slot::Second) == chose_second),
            TrialKind::BiasProbe => None,
        }
    }

    /// Both intervals show the reference pressure.
    pub fn is_reference_pair(&self, reference: Pressure) -> bool {
        same_pressure(self.first, reference) && same_pressure(self.second, reference)
    }
}

pub(crate) fn same_pressure(a: Pressure, b: Pressure) -> bool {
    (a.as_psi() - b.as_psi()).abs() <= 1e-9
}

/// Ordered forced-choice trials against a fixed reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSchedule {
    pub reference: Pressure,
    pub trials: Vec<Trial>,
    pub reps_per_test: u32,
}

impl TrialSchedule {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn trial(&self, id: u32) -> Option<&Trial> {
        self.trials.iter().find(|t| t.id == id)
    }

    /// Number of test (non-probe) trials per test pressure, keyed by psi bits.
    pub fn test_counts(&self) -> BTreeMap<u64, usize> {
        let mut counts = BTreeMap::new();
        for p in self.trials.iter().filter_map(Trial::test_pressure) {
            *counts.entry(p.as_psi().to_bits()).or_insert(0) += 1;
        }
        counts
    }
}

/// The seven test pressures and 2 psi reference of the tactile study.
pub const STUDY_REFERENCE_PSI: f64 = 2.0;
pub const STUDY_TESTS_PSI: [f64; 7] = [1.5, 1.75, 1.875, 2.0, 2.125, 2.25, 2.5];
pub const STUDY_REPS: u32 = 10;

/// Builds a shuffled forced-choice schedule.
///
/// Every test pressure is paired with the reference `reps` times, the
/// interval holding the test is drawn per trial, and `bias_reps`
/// reference-vs-reference probes are appended before the whole list is
/// shuffled. Trial ids follow presentation order starting at 1.
pub fn build_schedule(
    reference: Pressure,
    tests: &[Pressure],
    reps: u32,
    bias_reps: u32,
    seed: Seed,
) -> Result<TrialSchedule> {
    if tests.is_empty() {
        return Err(Error::invalid("schedule needs at least one test pressure"));
    }
    reference.check_operating()?;
    for p in tests {
        p.check_operating()?;
    }

    let mut rng = seed.derive(streams::SCHEDULE).rng();
    let mut trials = Vec::with_capacity(tests.len() * reps as usize + bias_reps as usize);
    for &test in tests {
        for _ in 0..reps {
            let test_slot = if rng.gen_bool(0.5) { Slot::Second } else { Slot::First };
            let (first, second) = match test_slot {
                Slot::First => (test, reference),
                Slot::Second => (reference, test),
            };
            trials.push(Trial {
                id: 0,
                first,
                second,
                kind: TrialKind::Test { test_slot },
            });
        }
    }
    for _ in 0..bias_reps {
        trials.push(Trial {
            id: 0,
            first: reference,
            second: reference,
            kind: TrialKind::BiasProbe,
        });
    }
    trials.shuffle(&mut rng);
    for (i, t) in trials.iter_mut().enumerate() {
        t.id = i as u32 + 1;
    }

    Ok(TrialSchedule {
        reference,
        trials,
        reps_per_test: reps,
    })
}

/// Study schedule: 2 psi reference, seven tests, ten repetitions each.
pub fn study_schedule(seed: Seed) -> TrialSchedule {
    let tests: Vec<Pressure> = STUDY_TESTS_PSI.iter().map(|&p| Pressure::psi(p)).collect();
    build_schedule(Pressure::psi(STUDY_REFERENCE_PSI), &tests, STUDY_REPS, 0, seed)
        .expect("study constants are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn psi(v: f64) -> Pressure {
        Pressure::psi(v)
    }

    #[test]
    fn study_schedule_has_seventy_pairs() {
        let s = study_schedule(Seed(1));
        assert_eq!(s.len(), 70);
        let ids: Vec<u32> = s.trials.iter().map(|t| t.id).collect();
        assert_eq!(ids, (1..=70).collect::<Vec<_>>());
    }

    #[test]
    fn zero_reps_gives_empty_schedule() {
        let s = build_schedule(psi(2.0), &[psi(2.5)], 0, 0, Seed(3)).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn single_test_order_counts_by_enumeration() {
        let mut first_counts = Vec::new();
        for seed in 0..40 {
            let s = build_schedule(psi(2.0), &[psi(2.5)], 10, 0, Seed(seed)).unwrap();
            let containing: Vec<&Trial> = s
                .trials
                .iter()
                .filter(|t| t.first == psi(2.5) || t.second == psi(2.5))
                .collect();
            assert_eq!(containing.len(), 10);
            for t in &containing {
                // exactly one interval holds the reference
                assert!((t.first == psi(2.0)) ^ (t.second == psi(2.0)));
            }
            let first = containing.iter().filter(|t| t.first == psi(2.5)).count();
            assert!(first <= 10);
            first_counts.push(first);
        }
        // the within-pair order depends on the seed
        first_counts.sort_unstable();
        first_counts.dedup();
        assert!(first_counts.len() > 1);
    }

    #[test]
    fn bias_probes_are_reference_pairs() {
        let s = build_schedule(psi(2.0), &[psi(1.5), psi(2.5)], 3, 4, Seed(9)).unwrap();
        assert_eq!(s.len(), 10);
        let probes: Vec<&Trial> = s
            .trials
            .iter()
            .filter(|t| t.kind == TrialKind::BiasProbe)
            .collect();
        assert_eq!(probes.len(), 4);
        assert!(probes.iter().all(|t| t.is_reference_pair(psi(2.0))));
    }

    #[test]
    fn out_of_range_pressures_rejected() {
        assert!(build_schedule(psi(2.0), &[psi(3.6)], 1, 0, Seed(0)).is_err());
        assert!(build_schedule(psi(0.0), &[psi(1.0)], 1, 0, Seed(0)).is_err());
        assert!(build_schedule(psi(2.0), &[], 1, 0, Seed(0)).is_err());
    }

    #[test]
    fn schedule_is_seed_deterministic() {
        assert_eq!(study_schedule(Seed(5)), study_schedule(Seed(5)));
        assert_ne!(study_schedule(Seed(5)), study_schedule(Seed(6)));
    }

    proptest! {
        #[test]
        fn every_test_pressure_appears_reps_times(seed in any::<u64>(), reps in 0u32..15, bias in 0u32..6) {
            let tests: Vec<Pressure> = STUDY_TESTS_PSI.iter().map(|&p| psi(p)).collect();
            let s = build_schedule(psi(2.0), &tests, reps, bias, Seed(seed)).unwrap();
            prop_assert_eq!(s.len(), tests.len() * reps as usize + bias as usize);
            let counts = s.test_counts();
            for p in &tests {
                let n = counts.get(&p.as_psi().to_bits()).copied().unwrap_or(0);
                prop_assert_eq!(n, reps as usize);
            }
            for t in &s.trials {
                match t.kind {
                    TrialKind::Test { .. } => {
                        prop_assert!(same_pressure(t.first, s.reference) || same_pressure(t.second, s.reference));
                    }
                    TrialKind::BiasProbe => prop_assert!(t.is_reference_pair(s.reference)),
                }
            }
        }
    }
}
