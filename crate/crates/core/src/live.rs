//! Command-driven teaching session, as exposed by the network service.
//!
//! [`LiveSession`] is the same protocol as [`crate::session::run_protocol`]
//! with the teacher replaced by a stream of commands. Given the same task,
//! seed, configuration and timestamped poses it produces the same report.
//! It also runs forced-choice perception trials on the plant.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Demonstration, Ensemble, TimedPose, TrainingSet};
use crate::psychophysics::{study_schedule, ResponseLedger, Trial};
use crate::session::{
    correct_segment, teaching_time, FeedbackLoop, SessionConfig, SessionFrame, SessionReport, Task,
};
use crate::types::{Pose, Pressure, Seed, UncertaintyLevel};
use crate::wire::{Command, Phase, ReportMessage, TelemetryFrame};

/// Perception-trial timing and where the response ledger goes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    /// Time each stimulus is held, s.
    pub interval_s: f64,
    /// Venting pause between and after the stimuli, s.
    pub gap_s: f64,
    pub ledger_path: Option<PathBuf>,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            interval_s: 1.5,
            gap_s: 0.5,
            ledger_path: None,
        }
    }
}

#[derive(Debug, Clone)]
struct ActiveTrial {
    trial: Trial,
    /// Control ticks elapsed since the trial started.
    ticks: u64,
}

/// Retraining work split off so the caller can run it off the session loop.
#[derive(Debug, Clone)]
pub struct RetrainJob {
    ensemble: Arc<Ensemble>,
    training: TrainingSet,
    second: Demonstration,
    task: Task,
    probe_poses: usize,
}

#[derive(Debug, Clone)]
pub struct RetrainResult {
    pub retrained: Ensemble,
    pub retraining_samples: usize,
    pub improvement_pct: f64,
}

impl RetrainJob {
    pub fn run(self) -> Result<RetrainResult> {
        let (retrained, data, gain) = crate::session::protocol::retrain_with(
            &self.ensemble,
            &self.training,
            &self.second,
            &self.task,
            self.probe_poses,
        )?;
        Ok(RetrainResult {
            retrained,
            retraining_samples: data.len(),
            improvement_pct: gain,
        })
    }
}

/// What the caller must do after a command.
#[derive(Debug)]
#[allow(clippy::large_enum_variant)] // short-lived, never stored
pub enum Effect {
    None,
    /// Run the job (it is slow) and hand the result to [`LiveSession::complete_retrain`].
    Retrain(RetrainJob),
}

#[derive(Debug)]
pub struct LiveSession {
    task: Task,
    config: SessionConfig,
    perception: PerceptionConfig,
    lp: FeedbackLoop,
    training: TrainingSet,
    phase: Phase,
    fault: Option<String>,
    first_demo: Option<Demonstration>,
    second_demo: Option<Demonstration>,
    range: Option<(f64, f64)>,
    frames: Vec<SessionFrame>,
    report: Option<SessionReport>,
    ledger: ResponseLedger,
    next_trial: usize,
    active: Option<ActiveTrial>,
}

impl LiveSession {
    /// Trains the initial learner exactly as the headless protocol does.
    pub fn new(task: Task, config: SessionConfig, perception: PerceptionConfig, seed: Seed) -> Result<Self> {
        let (lp, training) = config.prepare(&task, seed)?;
        Ok(LiveSession {
            task,
            config,
            perception,
            lp,
            training,
            phase: Phase::Idle,
            fault: None,
            first_demo: None,
            second_demo: None,
            range: None,
            frames: Vec::new(),
            report: None,
            ledger: ResponseLedger::new(study_schedule(seed)),
            next_trial: 0,
            active: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn fault(&self) -> Option<&str> {
        self.fault.as_deref()
    }

    pub fn frames(&self) -> &[SessionFrame] {
        &self.frames
    }

    pub fn report(&self) -> Option<&SessionReport> {
        self.report.as_ref()
    }

    pub fn ledger(&self) -> &ResponseLedger {
        &self.ledger
    }

    pub fn ensemble(&self) -> &Arc<Ensemble> {
        self.lp.ensemble()
    }

    /// Control period, s; [`LiveSession::tick`] should be called at this rate.
    pub fn tick_s(&self) -> f64 {
        self.lp.controller().tick
    }

    /// Snapshot for the console: the latest control tick, or the rest state before any.
    pub fn telemetry(&self) -> TelemetryFrame {
        let frame = self.lp.last_frame().unwrap_or_else(|| {
            let pose = self.task.pose_at(0.0);
            let state = self.lp.plant().state();
            SessionFrame {
                t: 0.0,
                pose,
                uncertainty: UncertaintyLevel::CERTAIN,
                setpoint: Pressure::ZERO,
                measured: state.pressure(),
                true_pressure: state.pressure(),
                valves: crate::plant::ValveState::CLOSED,
                ruptured: state.ruptured,
            }
        });
        TelemetryFrame::new(&frame, self.phase, self.fault.clone())
    }

    fn reject(&self, what: &str) -> Error {
        Error::Protocol(format!("{what} not allowed in phase {}", self.phase.as_str()))
    }

    /// Applies one operator command. `now` stamps poses sent without a time.
    pub fn apply(&mut self, cmd: &Command, now: f64) -> Result<Effect> {
        if self.fault.is_some() && !matches!(self.phase, Phase::Idle | Phase::Done) {
            return Err(Error::Protocol(format!("session faulted: {}", self.fault.as_deref().unwrap_or(""))));
        }
        match (cmd, self.phase) {
            (Command::StartDemo, Phase::Idle) => {
                if self.fault.is_some() {
                    return Err(self.reject("start_demo after a fault"));
                }
                self.phase = if self.first_demo.is_none() {
                    Phase::Demo1
                } else if self.second_demo.is_some() {
                    return Err(Error::Protocol("both demonstrations are recorded; send retrain".into()));
                } else if self.range.is_some() {
                    Phase::Demo2
                } else {
                    return Err(Error::Protocol("mark the segment to re-teach before the second demo".into()));
                };
                self.lp.begin_demo();
                Ok(Effect::None)
            }
            (Command::SetPose { s, x, y, t }, Phase::Demo1 | Phase::Demo2) => {
                let pose = match (x, y) {
                    (Some(x), Some(y)) => Pose::new([*x, *y], *s)?,
                    (None, None) => {
                        Pose::new(self.task.point_at(*s), *s)?;
                        self.task.pose_at(*s)
                    }
                    _ => return Err(Error::Protocol("set_pose needs both x and y, or neither".into())),
                };
                let tp = TimedPose { t: t.unwrap_or(now), pose };
                let result = self.lp.push_pose(tp, &mut self.frames);
                self.check_fault(result)?;
                Ok(Effect::None)
            }
            (Command::EndDemo, Phase::Demo1 | Phase::Demo2) => {
                let result = self.lp.end_demo(&mut self.frames);
                let demo = self.check_fault(result)?;
                if self.phase == Phase::Demo1 {
                    self.first_demo = Some(demo);
                } else {
                    self.second_demo = Some(demo);
                }
                self.phase = Phase::Idle;
                Ok(Effect::None)
            }
            (Command::MarkSegment { start, end }, Phase::Idle) => {
                if self.first_demo.is_none() || self.second_demo.is_some() {
                    return Err(Error::Protocol("mark_segment belongs between the two demonstrations".into()));
                }
                self.range = Some(crate::session::teacher::check_range((*start, *end))?);
                Ok(Effect::None)
            }
            (Command::Retrain, Phase::Idle) => {
                let Some(second) = self.second_demo.clone() else {
                    return Err(Error::Protocol("retrain needs the second demonstration".into()));
                };
                self.phase = Phase::Retraining;
                Ok(Effect::Retrain(RetrainJob {
                    ensemble: self.lp.ensemble().clone(),
                    training: self.training.clone(),
                    second,
                    task: self.task.clone(),
                    probe_poses: self.config.probe_poses,
                }))
            }
            (Command::StartTrial, Phase::Idle | Phase::Done) => {
                let trials = &self.ledger.schedule().trials;
                let Some(trial) = trials.get(self.next_trial).copied() else {
                    return Err(Error::Protocol(format!("all {} trials are answered", trials.len())));
                };
                self.active = Some(ActiveTrial { trial, ticks: 0 });
                self.phase = Phase::TrialFirst;
                Ok(Effect::None)
            }
            (Command::SubmitChoice { chose_second }, Phase::TrialChoice) => {
                let active = self.active.take().expect("choice phase has an active trial");
                self.ledger.record(active.trial.id, *chose_second)?;
                self.next_trial += 1;
                self.phase = if self.report.is_some() { Phase::Done } else { Phase::Idle };
                if self.ledger.is_complete() {
                    if let Some(path) = &self.perception.ledger_path {
                        self.ledger.write_csv(std::fs::File::create(path)?)?;
                    }
                }
                Ok(Effect::None)
            }
            (Command::SubmitChoice { .. }, Phase::TrialFirst | Phase::TrialSecond) => {
                Err(Error::Protocol("choice submitted before both intervals were shown".into()))
            }
            (Command::StartDemo, _) => Err(self.reject("start_demo")),
            (Command::SetPose { .. }, _) => Err(self.reject("set_pose")),
            (Command::EndDemo, _) => Err(self.reject("end_demo")),
            (Command::MarkSegment { .. }, _) => Err(self.reject("mark_segment")),
            (Command::Retrain, _) => Err(self.reject("retrain")),
            (Command::StartTrial, _) => Err(self.reject("start_trial")),
            (Command::SubmitChoice { .. }, _) => Err(self.reject("submit_choice")),
        }
    }

    fn check_fault<T>(&mut self, result: Result<T>) -> Result<T> {
        if let Err(e @ Error::Rupture { .. }) = &result {
            self.fault = Some(e.to_string());
            self.phase = Phase::Idle;
        }
        result
    }

    /// Installs the retrained learner and returns the session report.
    pub fn complete_retrain(&mut self, result: Result<RetrainResult>) -> Result<ReportMessage> {
        if self.phase != Phase::Retraining {
            return Err(self.reject("completing a retrain"));
        }
        let result = match result {
            Ok(r) => r,
            Err(e) => {
                self.phase = Phase::Idle;
                self.fault = Some(e.to_string());
                return Err(e);
            }
        };
        let second = self.second_demo.as_ref().expect("retraining follows the second demo");
        let report = SessionReport {
            teaching_time_s: Some(teaching_time(second)),
            correct_segment_pct: Some(correct_segment(second, &self.task)),
            improvement_pct: Some(result.improvement_pct),
            reteach_range: self.range,
            retraining_samples: Some(result.retraining_samples),
            fault: None,
            frames_csv: None,
            frames: self.frames.clone(),
        };
        let msg = ReportMessage::from_report(&report).expect("all metrics present");
        self.lp.set_ensemble(Arc::new(result.retrained));
        self.report = Some(report);
        self.phase = Phase::Done;
        Ok(msg)
    }

    /// Advances a perception trial by one control tick; idle otherwise.
    ///
    /// Returns whether the plant moved.
    pub fn tick(&mut self) -> Result<bool> {
        let Some(active) = self.active.as_mut() else {
            return Ok(false);
        };
        if self.phase == Phase::TrialChoice {
            return Ok(false);
        }
        let tick = self.lp.controller().tick;
        let interval = (self.perception.interval_s / tick).round() as u64;
        let gap = (self.perception.gap_s / tick).round() as u64;
        let k = active.ticks;
        active.ticks += 1;
        let (phase, setpoint) = if k < interval {
            (Phase::TrialFirst, active.trial.first)
        } else if k < interval + gap {
            (Phase::TrialFirst, Pressure::ZERO)
        } else if k < 2 * interval + gap {
            (Phase::TrialSecond, active.trial.second)
        } else if k < 2 * interval + 2 * gap {
            (Phase::TrialSecond, Pressure::ZERO)
        } else {
            self.phase = Phase::TrialChoice;
            return Ok(false);
        };
        self.phase = phase;
        let result = self.lp.hold_pressure(setpoint);
        self.check_fault(result)?;
        Ok(true)
    }
}
