use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::schedule::{same_pressure, Slot, Trial, TrialKind, TrialSchedule};
use crate::error::{Error, Result};
use crate::types::Pressure;

/// Responses collected against a schedule, one per trial id.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseLedger {
    schedule: TrialSchedule,
    responses: BTreeMap<u32, bool>,
}

impl ResponseLedger {
    pub fn new(schedule: TrialSchedule) -> Self {
        ResponseLedger {
            schedule,
            responses: BTreeMap::new(),
        }
    }

    pub fn schedule(&self) -> &TrialSchedule {
        &self.schedule
    }

    pub fn reference(&self) -> Pressure {
        self.schedule.reference
    }

    /// Records whether the subject picked the second interval as higher.
    pub fn record(&mut self, trial_id: u32, chose_second: bool) -> Result<()> {
        if self.schedule.trial(trial_id).is_none() {
            return Err(Error::UnknownTrial(trial_id));
        }
        if self.responses.insert(trial_id, chose_second).is_some() {
            return Err(Error::DuplicateResponse(trial_id));
        }
        Ok(())
    }

    pub fn response(&self, trial_id: u32) -> Option<bool> {
        self.responses.get(&trial_id).copied()
    }

    pub fn missing(&self) -> usize {
        self.schedule.len() - self.responses.len()
    }

    pub fn is_complete(&self) -> bool {
        self.missing() == 0
    }

    /// Answered trials in schedule order.
    pub fn answered(&self) -> impl Iterator<Item = (&Trial, bool)> {
        self.schedule
            .trials
            .iter()
            .filter_map(|t| self.responses.get(&t.id).map(|&c| (t, c)))
    }

    /// Writes `trial_id,first_psi,second_psi,chose_second`, answered trials only.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for (t, chose_second) in self.answered() {
            w.write_record([
                t.id.to_string(),
                t.first.as_psi().to_string(),
                t.second.as_psi().to_string(),
                chose_second.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a response CSV, rebuilding the schedule around `reference`.
    ///
    /// A row with the reference in one interval is a test trial. A row with
    /// the reference in both is a test at the reference level whose "test"
    /// interval is taken to be the second; it is also a bias probe for
    /// [`bias_report`]. Rows without the reference are rejected.
    pub fn read_csv<R: Read>(input: R, reference: Pressure) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header_line = 1;
        let headers = rdr.headers().map_err(|e| Error::Parse {
            line: header_line,
            message: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(Error::Parse {
                line: header_line,
                message: format!("expected header `{}`", CSV_HEADER.join(",")),
            });
        }

        let mut trials = Vec::new();
        let mut responses = BTreeMap::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Parse { line, message };
            if record.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", record.len())));
            }
            let id: u32 = record[0]
                .parse()
                .map_err(|_| bad(format!("bad trial_id `{}`", &record[0])))?;
            let first = parse_psi(&record[1]).map_err(|m| bad(format!("first_psi: {m}")))?;
            let second = parse_psi(&record[2]).map_err(|m| bad(format!("second_psi: {m}")))?;
            let chose_second = parse_bool(&record[3])
                .ok_or_else(|| bad(format!("bad chose_second `{}`", &record[3])))?;

            let test_slot = if same_pressure(first, reference) {
                Slot::Second
            } else if same_pressure(second, reference) {
                Slot::First
            } else {
                return Err(bad(format!(
                    "neither interval holds the reference {reference}"
                )));
            };
            if responses.insert(id, chose_second).is_some() {
                return Err(bad(format!("duplicate trial_id {id}")));
            }
            trials.push(Trial {
                id,
                first,
                second,
                kind: TrialKind::Test { test_slot },
            });
        }

        let reps_per_test = {
            let schedule = TrialSchedule {
                reference,
                trials: trials.clone(),
                reps_per_test: 0,
            };
            schedule.test_counts().values().copied().max().unwrap_or(0) as u32
        };
        Ok(ResponseLedger {
            schedule: TrialSchedule {
                reference,
                trials,
                reps_per_test,
            },
            responses,
        })
    }
}

pub const CSV_HEADER: [&str; 4] = ["trial_id", "first_psi", "second_psi", "chose_second"];

fn parse_psi(field: &str) -> std::result::Result<Pressure, String> {
    let v: f64 = field.parse().map_err(|_| format!("`{field}` is not a number"))?;
    Pressure::try_psi(v).map_err(|e| e.to_string())
}

fn parse_bool(field: &str) -> Option<bool> {
    match field.to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// Observed percentage of "test chosen higher" at one test pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TallyPoint {
    pub pressure: Pressure,
    pub percent: f64,
    pub trials: usize,
}

/// Percent of trials at each test pressure where the test was chosen higher.
///
/// Bias probes are skipped. Output is sorted by pressure.
pub fn tally(ledger: &ResponseLedger) -> Result<Vec<TallyPoint>> {
    if !ledger.is_complete() {
        return Err(Error::IncompleteLedger {
            missing: ledger.missing(),
        });
    }
    let mut by_pressure: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for (trial, chose_second) in ledger.answered() {
        let (Some(p), Some(chose_test)) = (trial.test_pressure(), trial.chose_test(chose_second))
        else {
            continue;
        };
        let e = by_pressure.entry(p.as_psi().to_bits()).or_insert((0, 0));
        e.0 += chose_test as usize;
        e.1 += 1;
    }
    let mut points: Vec<TallyPoint> = by_pressure
        .into_iter()
        .map(|(bits, (chosen, n))| TallyPoint {
            pressure: Pressure::psi(f64::from_bits(bits)),
            percent: 100.0 * chosen as f64 / n as f64,
            trials: n,
        })
        .collect();
    points.sort_by(|a, b| a.pressure.as_psi().total_cmp(&b.pressure.as_psi()));
    Ok(points)
}

/// Interval preference over reference-vs-reference trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSplit {
    pub first_pct: f64,
    pub second_pct: f64,
    pub probes: usize,
}

impl BiasSplit {
    /// Pools several splits, weighting each by its probe count.
    pub fn pool(splits: &[BiasSplit]) -> Result<BiasSplit> {
        let probes: usize = splits.iter().map(|s| s.probes).sum();
        if probes == 0 {
            return Err(Error::NoBiasProbes);
        }
        let second: f64 = splits
            .iter()
            .map(|s| s.second_pct / 100.0 * s.probes as f64)
            .sum();
        let second_pct = 100.0 * second / probes as f64;
        Ok(BiasSplit {
            first_pct: 100.0 - second_pct,
            second_pct,
            probes,
        })
    }
}

/// Share of answered reference-vs-reference trials where each interval was picked.
pub fn bias_report(ledger: &ResponseLedger) -> Result<BiasSplit> {
    let reference = ledger.reference();
    let (mut second, mut n) = (0usize, 0usize);
    for (trial, chose_second) in ledger.answered() {
        if trial.is_reference_pair(reference) {
            second += chose_second as usize;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoBiasProbes);
    }
    let second_pct = 100.0 * second as f64 / n as f64;
    Ok(BiasSplit {
        first_pct: 100.0 - second_pct,
        second_pct,
        probes: n,
    })
}

/// Header of a pre-tallied response file.
pub const TALLY_HEADER: [&str; 3] = ["psi", "percent", "trials"];

/// Writes one `psi,percent,trials` row per test pressure.
pub fn write_tally_csv<W: Write>(points: &[TallyPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TALLY_HEADER)?;
    for p in points {
        w.write_record([
            p.pressure.as_psi().to_string(),
            p.percent.to_string(),
            p.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a pre-tallied response file; `trials` may be left empty.
pub fn read_tally_csv<R: Read>(input: R) -> Result<Vec<TallyPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != TALLY_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", TALLY_HEADER.join(",")),
        });
    }
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse { line, message };
        let pressure = parse_psi(&record[0]).map_err(|m| bad(format!("psi: {m}")))?;
        let percent: f64 = record[1]
            .parse()
            .map_err(|_| bad(format!("bad percent `{}`", &record[1])))?;
        if !(0.0..=100.0).contains(&percent) {
            return Err(bad(format!("percent {percent} outside [0, 100]")));
        }
        let trials = match &record[2] {
            "" => 0,
            f => f.parse().map_err(|_| bad(format!("bad trials `{f}`")))?,
        };
        points.push(TallyPoint { pressure, percent, trials });
    }
    Ok(points)
}
