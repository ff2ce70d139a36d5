use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{control_tick, uncertainty_to_setpoint, ControllerConfig, RenderingLaw};
use crate::error::{Error, Result};
use crate::learner::{Demonstration, Ensemble, TimedPose};
use crate::plant::{Plant, ValveState};
use crate::types::{Pose, Pressure, UncertaintyLevel};

/// One control tick of a feedback demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionFrame {
    /// Session clock, s.
    pub t: f64,
    pub pose: Pose,
    pub uncertainty: UncertaintyLevel,
    pub setpoint: Pressure,
    pub measured: Pressure,
    pub true_pressure: Pressure,
    pub valves: ValveState,
    pub ruptured: bool,
}

/// Closed loop from teacher pose to sleeve pressure.
///
/// The loop ticks at the controller rate on a session clock that only runs
/// during demonstrations. Teacher poses are held between updates, and the
/// ensemble is queried whenever the held pose changes, so every frame's
/// uncertainty is the query at that frame's pose.
#[derive(Debug, Clone)]
pub struct FeedbackLoop {
    plant: Plant,
    ensemble: Arc<Ensemble>,
    law: RenderingLaw,
    cfg: ControllerConfig,
    ticks: u64,
    /// Session time minus teacher time for the current demonstration.
    offset: Option<f64>,
    pose: Option<Pose>,
    uncertainty: UncertaintyLevel,
    recorded: Vec<TimedPose>,
    last_frame: Option<SessionFrame>,
}

/// Tolerance when lining teacher timestamps up with control ticks, s.
const CLOCK_EPS: f64 = 1e-9;

impl FeedbackLoop {
    pub fn new(plant: Plant, ensemble: Arc<Ensemble>, law: RenderingLaw, cfg: ControllerConfig) -> Result<Self> {
        law.validate()?;
        cfg.validate()?;
        Ok(FeedbackLoop {
            plant,
            ensemble,
            law,
            cfg,
            ticks: 0,
            offset: None,
            pose: None,
            uncertainty: UncertaintyLevel::CERTAIN,
            recorded: Vec::new(),
            last_frame: None,
        })
    }

    pub fn ensemble(&self) -> &Arc<Ensemble> {
        &self.ensemble
    }

    pub fn set_ensemble(&mut self, ensemble: Arc<Ensemble>) {
        self.ensemble = ensemble;
        if let Some(p) = self.pose {
            self.uncertainty = self.ensemble.uncertainty(&p);
        }
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn law(&self) -> &RenderingLaw {
        &self.law
    }

    pub fn controller(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// Session clock, s.
    pub fn clock(&self) -> f64 {
        self.ticks as f64 * self.cfg.tick
    }

    pub fn last_frame(&self) -> Option<SessionFrame> {
        self.last_frame
    }

    pub fn in_demo(&self) -> bool {
        self.offset.is_some()
    }

    pub fn recorded(&self) -> &[TimedPose] {
        &self.recorded
    }

    /// Drives the plant toward `setpoint` for one tick without a pose or ensemble query.
    pub fn hold_pressure(&mut self, setpoint: Pressure) -> Result<SessionFrame> {
        let pose = self.pose.unwrap_or_default();
        self.tick_with(pose, UncertaintyLevel::CERTAIN, setpoint)
    }

    fn tick_with(&mut self, pose: Pose, uncertainty: UncertaintyLevel, setpoint: Pressure) -> Result<SessionFrame> {
        let t = self.clock();
        let sample = control_tick(&mut self.plant, setpoint, &self.cfg)?;
        self.ticks += 1;
        let frame = SessionFrame {
            t,
            pose,
            uncertainty,
            setpoint: sample.setpoint,
            measured: sample.measured,
            true_pressure: sample.true_pressure,
            valves: sample.valves,
            ruptured: self.plant.state().ruptured,
        };
        self.last_frame = Some(frame);
        if frame.ruptured && !sample.ruptured {
            return Err(Error::Rupture { time: self.clock() });
        }
        Ok(frame)
    }

    fn tick(&mut self, out: &mut Vec<SessionFrame>) -> Result<()> {
        let pose = self.pose.expect("ticks only run once a pose is held");
        let setpoint = uncertainty_to_setpoint(self.uncertainty, &self.law, &self.cfg);
        let before = self.ticks;
        let result = self.tick_with(pose, self.uncertainty, setpoint);
        if self.ticks > before {
            out.extend(self.last_frame);
        }
        result.map(|_| ())
    }

    /// Starts recording a demonstration; the first pose pins the time origin.
    pub fn begin_demo(&mut self) {
        self.offset = None;
        self.recorded.clear();
    }

    /// Runs the loop up to `tp.t` with the previous pose held, then holds `tp.pose`.
    pub fn push_pose(&mut self, tp: TimedPose, out: &mut Vec<SessionFrame>) -> Result<()> {
        if !tp.t.is_finite() {
            return Err(Error::NonFinite { what: "pose time" });
        }
        if let Some(last) = self.recorded.last() {
            if !(tp.t > last.t) {
                return Err(Error::invalid(format!(
                    "pose time {} does not follow {}",
                    tp.t, last.t
                )));
            }
        }
        let offset = *self.offset.get_or_insert(self.clock() - tp.t);
        let target = tp.t + offset;
        while self.pose.is_some() && !self.recorded.is_empty() && self.clock() < target - CLOCK_EPS {
            self.tick(out)?;
        }
        if self.pose != Some(tp.pose) {
            self.uncertainty = self.ensemble.uncertainty(&tp.pose);
        }
        self.pose = Some(tp.pose);
        self.recorded.push(tp);
        Ok(())
    }

    /// Runs through the last pose's tick and returns the recorded demonstration.
    pub fn end_demo(&mut self, out: &mut Vec<SessionFrame>) -> Result<Demonstration> {
        let (Some(offset), Some(last)) = (self.offset, self.recorded.last().copied()) else {
            return Err(Error::invalid("demonstration has no poses"));
        };
        let target = last.t + offset;
        while self.clock() <= target + CLOCK_EPS {
            self.tick(out)?;
        }
        let demo = Demonstration::from_poses(&self.recorded)?;
        self.offset = None;
        self.recorded.clear();
        Ok(demo)
    }
}
