use std::path::Path;

use serde::{Deserialize, Serialize};

use super::feedback::SessionFrame;
use super::task::{SegmentId, Task};
use crate::error::{Error, Result};
use crate::learner::{TimedPose, DEMO_RATE_HZ};
use crate::types::Pose;

/// Source of demonstration poses and of the re-teach decision.
///
/// Scripted files, simulated policies and (through the service) a live
/// operator all drive the same protocol code.
pub trait Teacher {
    fn first_demo(&mut self, task: &Task) -> Result<Vec<TimedPose>>;

    /// Path-parameter range `[s0, s1]` to demonstrate again, given the first demo's frames.
    fn reteach_range(&mut self, task: &Task, frames: &[SessionFrame]) -> Result<(f64, f64)>;

    fn second_demo(&mut self, task: &Task, range: (f64, f64)) -> Result<Vec<TimedPose>>;
}

pub(crate) fn check_range((s0, s1): (f64, f64)) -> Result<(f64, f64)> {
    if 0.0 <= s0 && s0 < s1 && s1 <= 1.0 {
        Ok((s0, s1))
    } else {
        Err(Error::invalid(format!("re-teach range [{s0}, {s1}] must satisfy 0 <= s0 < s1 <= 1")))
    }
}

/// Constant-speed traversal of `[s0, s1]` sampled at the demo rate, starting at t = 0.
fn traverse(task: &Task, (s0, s1): (f64, f64), speed: f64) -> Vec<TimedPose> {
    let duration = (s1 - s0).abs() / speed;
    let n = (duration * DEMO_RATE_HZ).round().max(1.0) as usize + 1;
    (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            TimedPose {
                t: i as f64 / DEMO_RATE_HZ,
                pose: task.pose_at(s0 + f * (s1 - s0)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "target", content = "segment")]
pub enum ReteachTarget {
    /// The segment the learner was never shown.
    Withheld,
    FullTask,
    Segment(SegmentId),
}

/// Simulated teacher that knows where to re-teach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleTeacher {
    pub target: ReteachTarget,
    /// Path fraction covered per second.
    pub speed: f64,
}

impl OracleTeacher {
    pub fn new(target: ReteachTarget) -> Self {
        OracleTeacher { target, speed: 0.1 }
    }
}

impl Teacher for OracleTeacher {
    fn first_demo(&mut self, task: &Task) -> Result<Vec<TimedPose>> {
        Ok(traverse(task, (0.0, 1.0), self.speed))
    }

    fn reteach_range(&mut self, task: &Task, _frames: &[SessionFrame]) -> Result<(f64, f64)> {
        let seg = match self.target {
            ReteachTarget::FullTask => return Ok((0.0, 1.0)),
            ReteachTarget::Withheld => task
                .withheld_segment()
                .ok_or_else(|| Error::InvalidTask("task has no withheld segment".into()))?,
            ReteachTarget::Segment(id) => task
                .segment(id)
                .ok_or_else(|| Error::InvalidTask(format!("no segment {id}")))?,
        };
        Ok((seg.start, seg.end))
    }

    fn second_demo(&mut self, task: &Task, range: (f64, f64)) -> Result<Vec<TimedPose>> {
        Ok(traverse(task, check_range(range)?, self.speed))
    }
}

/// Teacher that re-teaches wherever the sleeve felt firm during the first demo.
///
/// The range is the longest run of first-demo frames whose measured pressure
/// exceeds `threshold_psi`; with no such run it re-teaches the whole task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdTeacher {
    pub threshold_psi: f64,
    pub speed: f64,
}

impl Default for ThresholdTeacher {
    fn default() -> Self {
        ThresholdTeacher {
            threshold_psi: 2.0,
            speed: 0.1,
        }
    }
}

impl Teacher for ThresholdTeacher {
    fn first_demo(&mut self, task: &Task) -> Result<Vec<TimedPose>> {
        Ok(traverse(task, (0.0, 1.0), self.speed))
    }

    fn reteach_range(&mut self, _task: &Task, frames: &[SessionFrame]) -> Result<(f64, f64)> {
        let mut best: Option<(usize, usize)> = None;
        let mut start = None;
        for (i, f) in frames.iter().enumerate() {
            let firm = f.measured.as_psi() > self.threshold_psi;
            match (firm, start) {
                (true, None) => start = Some(i),
                (false, Some(a)) => {
                    if best.is_none_or(|(b0, b1)| i - a > b1 - b0) {
                        best = Some((a, i));
                    }
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(a) = start {
            if best.is_none_or(|(b0, b1)| frames.len() - a > b1 - b0) {
                best = Some((a, frames.len()));
            }
        }
        let Some((a, b)) = best else {
            return Ok((0.0, 1.0));
        };
        let (lo, hi) = frames[a..b]
            .iter()
            .map(|f| f.pose.path_parameter)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
        if hi > lo {
            Ok((lo, hi))
        } else {
            Ok(((lo - 0.05).max(0.0), (hi + 0.05).min(1.0)))
        }
    }

    fn second_demo(&mut self, task: &Task, range: (f64, f64)) -> Result<Vec<TimedPose>> {
        Ok(traverse(task, check_range(range)?, self.speed))
    }
}

/// One scripted pose; `x`/`y` default to the path point at `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptPose {
    pub t: f64,
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

impl ScriptPose {
    pub fn resolve(&self, task: &Task) -> Result<TimedPose> {
        let pose = match (self.x, self.y) {
            (Some(x), Some(y)) => Pose::new([x, y], self.s)?,
            (None, None) => {
                Pose::new(task.point_at(self.s), self.s)?;
                task.pose_at(self.s)
            }
            _ => return Err(Error::invalid("scripted pose needs both x and y, or neither")),
        };
        Ok(TimedPose { t: self.t, pose })
    }
}

/// Teacher script: `{first: [{t, s[, x, y]}...], range: [s0, s1], second: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptFile {
    pub first: Vec<ScriptPose>,
    pub range: (f64, f64),
    pub second: Vec<ScriptPose>,
}

impl ScriptFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Script of what `teacher` would do, for replay elsewhere.
    pub fn record(teacher: &mut dyn Teacher, task: &Task, frames: &[SessionFrame]) -> Result<Self> {
        let strip = |poses: Vec<TimedPose>| {
            poses
                .into_iter()
                .map(|tp| ScriptPose {
                    t: tp.t,
                    s: tp.pose.path_parameter,
                    x: Some(tp.pose.position[0]),
                    y: Some(tp.pose.position[1]),
                })
                .collect()
        };
        let first = strip(teacher.first_demo(task)?);
        let range = teacher.reteach_range(task, frames)?;
        let second = strip(teacher.second_demo(task, range)?);
        Ok(ScriptFile { first, range, second })
    }
}

/// Replays a [`ScriptFile`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptTeacher {
    pub script: ScriptFile,
}

impl ScriptTeacher {
    pub fn new(script: ScriptFile) -> Self {
        ScriptTeacher { script }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(ScriptTeacher::new(ScriptFile::load(path)?))
    }
}

impl Teacher for ScriptTeacher {
    fn first_demo(&mut self, task: &Task) -> Result<Vec<TimedPose>> {
        self.script.first.iter().map(|p| p.resolve(task)).collect()
    }

    fn reteach_range(&mut self, _task: &Task, _frames: &[SessionFrame]) -> Result<(f64, f64)> {
        check_range(self.script.range)
    }

    fn second_demo(&mut self, task: &Task, _range: (f64, f64)) -> Result<Vec<TimedPose>> {
        self.script.second.iter().map(|p| p.resolve(task)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::task::bundled;

    #[test]
    fn oracle_targets() {
        let task = bundled::cleaning();
        let mut t = OracleTeacher::new(ReteachTarget::Withheld);
        let first = t.first_demo(&task).unwrap();
        assert_eq!(first.len(), 201);
        assert!((first.last().unwrap().t - 10.0).abs() < 1e-12);
        let r = t.reteach_range(&task, &[]).unwrap();
        assert_eq!(r, (0.0, 1.0 / 3.0));
        let second = t.second_demo(&task, r).unwrap();
        assert!(second.iter().all(|p| task.segment_of(p.pose.path_parameter) == 1
            || p.pose.path_parameter == 1.0 / 3.0));
        let mut full = OracleTeacher::new(ReteachTarget::FullTask);
        assert_eq!(full.reteach_range(&task, &[]).unwrap(), (0.0, 1.0));
        let mut wrong = OracleTeacher::new(ReteachTarget::Segment(2));
        assert_eq!(wrong.reteach_range(&task, &[]).unwrap(), (1.0 / 3.0, 2.0 / 3.0));
        assert!(OracleTeacher::new(ReteachTarget::Segment(9)).reteach_range(&task, &[]).is_err());
    }

    #[test]
    fn script_round_trip_and_validation() {
        let task = bundled::shelving();
        let mut oracle = OracleTeacher::new(ReteachTarget::Withheld);
        let script = ScriptFile::record(&mut oracle, &task, &[]).unwrap();
        let json = serde_json::to_string(&script).unwrap();
        let back: ScriptFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, script);
        let mut replay = ScriptTeacher::new(back);
        assert_eq!(replay.first_demo(&task).unwrap(), oracle.first_demo(&task).unwrap());

        let minimal: ScriptFile =
            serde_json::from_str(r#"{"first":[{"t":0,"s":0.5}],"range":[0.9,0.2],"second":[]}"#).unwrap();
        let mut st = ScriptTeacher::new(minimal);
        assert_eq!(st.first_demo(&task).unwrap()[0].pose, task.pose_at(0.5));
        assert!(st.reteach_range(&task, &[]).is_err());
    }
}
