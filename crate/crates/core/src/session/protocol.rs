use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::feedback::{FeedbackLoop, SessionFrame};
use super::task::Task;
use super::teacher::{check_range, Teacher};
use super::{correct_segment, teaching_time};
use crate::control::ControlFile;
use crate::error::{Error, Result};
use crate::learner::{bootstrap, improvement, Demonstration, Ensemble, EnsembleConfig, TimedPose, TrainingSet};
use crate::plant::{Plant, PlantParams, PlantState};
use crate::types::Seed;

/// Full-task sweep size for the improvement probe.
pub const PROBE_POSES: usize = 200;

/// Everything a headless session needs besides the task, teacher and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub ensemble: EnsembleConfig,
    pub plant: PlantParams,
    pub control: ControlFile,
    pub probe_poses: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            ensemble: EnsembleConfig::default(),
            plant: PlantParams::default(),
            control: ControlFile::default(),
            probe_poses: PROBE_POSES,
        }
    }
}

impl SessionConfig {
    /// Trains the initial learner and wires a fresh plant and controller around it.
    pub fn prepare(&self, task: &Task, seed: Seed) -> Result<(FeedbackLoop, TrainingSet)> {
        let (law, ctrl) = self.control.into_parts()?;
        let (ensemble, data) = bootstrap(task, &self.ensemble, seed)?;
        let plant = Plant::new(self.plant, PlantState::at_rest(ctrl.safety_clamp), seed)?;
        Ok((FeedbackLoop::new(plant, Arc::new(ensemble), law, ctrl)?, data))
    }

    /// Runs the whole protocol headless.
    pub fn run(&self, task: &Task, teacher: &mut dyn Teacher, seed: Seed) -> Result<ProtocolOutcome> {
        let (lp, data) = self.prepare(task, seed)?;
        run_protocol(task, lp, &data, teacher, self.probe_poses)
    }
}

/// The three dependent measures of a teaching session, plus the frame trace.
///
/// Metrics are absent when the session aborted before they could be measured;
/// `fault` then says why.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionReport {
    pub teaching_time_s: Option<f64>,
    pub correct_segment_pct: Option<f64>,
    pub improvement_pct: Option<f64>,
    pub reteach_range: Option<(f64, f64)>,
    pub retraining_samples: Option<usize>,
    pub fault: Option<String>,
    /// Where the frame trace was written, if it was.
    pub frames_csv: Option<String>,
    #[serde(skip)]
    pub frames: Vec<SessionFrame>,
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub report: SessionReport,
    pub first_demo: Option<Demonstration>,
    pub second_demo: Option<Demonstration>,
    pub retrained: Option<Ensemble>,
}

/// Streams `poses` through the feedback loop and returns the recorded demonstration.
pub fn run_feedback_demo(lp: &mut FeedbackLoop, poses: &[TimedPose], frames: &mut Vec<SessionFrame>) -> Result<Demonstration> {
    lp.begin_demo();
    for &tp in poses {
        lp.push_pose(tp, frames)?;
    }
    lp.end_demo(frames)
}

/// Retraining after the second demo: its samples are appended to the original training set.
pub(crate) fn retrain_with(
    ensemble: &Ensemble,
    training: &TrainingSet,
    second: &Demonstration,
    task: &Task,
    probe_poses: usize,
) -> Result<(Ensemble, TrainingSet, f64)> {
    let mut data = training.clone();
    let next_demo = data.sources.iter().map(|s| s.demo + 1).max().unwrap_or(0);
    data.append(second, next_demo, task);
    let after = ensemble.retrain(&data)?;
    let gain = improvement(ensemble, &after, &task.sweep(probe_poses))?;
    Ok((after, data, gain))
}

/// First demo with feedback, re-teach decision, second demo, retrain, metrics.
pub fn run_protocol(
    task: &Task,
    mut lp: FeedbackLoop,
    training: &TrainingSet,
    teacher: &mut dyn Teacher,
    probe_poses: usize,
) -> Result<ProtocolOutcome> {
    let mut outcome = ProtocolOutcome {
        report: SessionReport::default(),
        first_demo: None,
        second_demo: None,
        retrained: None,
    };
    let mut frames = Vec::new();

    let first_poses = teacher.first_demo(task)?;
    match run_feedback_demo(&mut lp, &first_poses, &mut frames) {
        Ok(d) => outcome.first_demo = Some(d),
        Err(e) => return abort(outcome, frames, e),
    }

    let range = check_range(teacher.reteach_range(task, &frames)?)?;
    outcome.report.reteach_range = Some(range);
    let second_poses = teacher.second_demo(task, range)?;
    let second = match run_feedback_demo(&mut lp, &second_poses, &mut frames) {
        Ok(d) => d,
        Err(e) => return abort(outcome, frames, e),
    };

    outcome.report.teaching_time_s = Some(teaching_time(&second));
    outcome.report.correct_segment_pct = Some(correct_segment(&second, task));
    let (after, data, gain) = retrain_with(lp.ensemble(), training, &second, task, probe_poses)?;
    outcome.report.improvement_pct = Some(gain);
    outcome.report.retraining_samples = Some(data.len());
    outcome.report.frames = frames;
    outcome.second_demo = Some(second);
    outcome.retrained = Some(after);
    Ok(outcome)
}

fn abort(mut outcome: ProtocolOutcome, frames: Vec<SessionFrame>, err: Error) -> Result<ProtocolOutcome> {
    match err {
        Error::Rupture { .. } => {
            outcome.report.fault = Some(err.to_string());
            outcome.report.frames = frames;
            Ok(outcome)
        }
        other => Err(other),
    }
}

/// Frame trace as CSV, one row per control tick.
pub fn write_frames_csv<W: Write>(frames: &[SessionFrame], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t", "x", "y", "s", "u", "setpoint_psi", "measured_psi", "true_psi", "fill", "vent", "ruptured",
    ])?;
    for f in frames {
        w.write_record([
            format!("{:.3}", f.t),
            f.pose.position[0].to_string(),
            f.pose.position[1].to_string(),
            f.pose.path_parameter.to_string(),
            f.uncertainty.value().to_string(),
            f.setpoint.as_psi().to_string(),
            f.measured.as_psi().to_string(),
            f.true_pressure.as_psi().to_string(),
            u8::from(f.valves.fill_open).to_string(),
            u8::from(f.valves.vent_open).to_string(),
            u8::from(f.ruptured).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
