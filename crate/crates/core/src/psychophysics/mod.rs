//! Two-interval forced-choice pressure discrimination.
//!
//! A subject feels a reference pressure and a test pressure in random order
//! and reports which felt higher. Per test pressure, the share of "test
//! higher" answers is fitted with a logistic curve pinned at 50% on the
//! reference; its steepness `k` gives the just-noticeable difference
//! `ln(3)/k` and the Weber fraction `JND / reference`.

mod fit;
mod ledger;
pub mod report;
mod schedule;
pub mod simulate;

pub use fit::{
    aggregate, fit_sigmoid, golden_section, jnd, jnd_for, points_from_tally, psychometric, residual,
    CohortRow, CohortSummary, JndReport, PsychometricFit, K_MAX, K_MIN,
};
pub use ledger::{
    bias_report, read_tally_csv, tally, write_tally_csv, BiasSplit, ResponseLedger, TallyPoint, CSV_HEADER,
    TALLY_HEADER,
};
pub use schedule::{
    build_schedule, study_schedule, Slot, Trial, TrialKind, TrialSchedule, STUDY_REFERENCE_PSI,
    STUDY_REPS, STUDY_TESTS_PSI,
};
