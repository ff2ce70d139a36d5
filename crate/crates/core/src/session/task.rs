use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Pose;

pub type SegmentId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn contains(&self, s: f64) -> bool {
        s >= self.start && s <= self.end
    }

    pub fn span(&self) -> f64 {
        self.end - self.start
    }
}

/// A planar waypoint path split into consecutive segments by arc-length fraction.
///
/// File form: `{name, waypoints: [[x,y],...], segments: [{id, start, end}], withheld}`.
/// `withheld` names the segment left out of initial training, or is null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaskFile", into = "TaskFile")]
pub struct Task {
    pub name: String,
    waypoints: Vec<[f64; 2]>,
    segments: Vec<Segment>,
    withheld: Option<SegmentId>,
    /// Cumulative arc length at each waypoint.
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskFile {
    name: String,
    waypoints: Vec<[f64; 2]>,
    segments: Vec<Segment>,
    withheld: Option<SegmentId>,
}

impl TryFrom<TaskFile> for Task {
    type Error = Error;

    fn try_from(f: TaskFile) -> Result<Self> {
        Task::new(f.name, f.waypoints, f.segments, f.withheld)
    }
}

impl From<Task> for TaskFile {
    fn from(t: Task) -> Self {
        TaskFile {
            name: t.name,
            waypoints: t.waypoints,
            segments: t.segments,
            withheld: t.withheld,
        }
    }
}

const PARTITION_TOL: f64 = 1e-9;

impl Task {
    pub fn new(
        name: impl Into<String>,
        waypoints: Vec<[f64; 2]>,
        segments: Vec<Segment>,
        withheld: Option<SegmentId>,
    ) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidTask("path needs at least two waypoints".into()));
        }
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTask("waypoints must be finite".into()));
        }
        let mut cumulative = Vec::with_capacity(waypoints.len());
        cumulative.push(0.0);
        for w in waypoints.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            cumulative.push(cumulative.last().unwrap() + d);
        }
        if !(*cumulative.last().unwrap() > 0.0) {
            return Err(Error::InvalidTask("path has zero length".into()));
        }

        if segments.is_empty() {
            return Err(Error::InvalidTask("task needs at least one segment".into()));
        }
        let mut cursor = 0.0;
        for (i, seg) in segments.iter().enumerate() {
            if (seg.start - cursor).abs() > PARTITION_TOL || !(seg.end > seg.start) {
                return Err(Error::InvalidTask(format!(
                    "segment {} [{}, {}] leaves a gap or overlap at {cursor}",
                    seg.id, seg.start, seg.end
                )));
            }
            if segments[..i].iter().any(|s| s.id == seg.id) {
                return Err(Error::InvalidTask(format!("duplicate segment id {}", seg.id)));
            }
            cursor = seg.end;
        }
        if (cursor - 1.0).abs() > PARTITION_TOL {
            return Err(Error::InvalidTask(format!("segments end at {cursor}, not 1")));
        }
        if let Some(w) = withheld {
            if !segments.iter().any(|s| s.id == w) {
                return Err(Error::InvalidTask(format!("withheld segment {w} does not exist")));
            }
        }
        Ok(Task {
            name: name.into(),
            waypoints,
            segments,
            withheld,
            cumulative,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.waypoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn withheld(&self) -> Option<SegmentId> {
        self.withheld
    }

    pub fn withheld_segment(&self) -> Option<&Segment> {
        self.withheld.and_then(|id| self.segment(id))
    }

    /// Same path with a different (or no) withheld segment.
    pub fn with_withheld(&self, withheld: Option<SegmentId>) -> Result<Self> {
        Task::new(self.name.clone(), self.waypoints.clone(), self.segments.clone(), withheld)
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Segment containing `s`; shared boundaries belong to the later segment.
    pub fn segment_of(&self, s: f64) -> SegmentId {
        self.segments
            .iter()
            .find(|seg| s >= seg.start && s < seg.end)
            .unwrap_or_else(|| {
                if s < 0.5 {
                    self.segments.first().unwrap()
                } else {
                    self.segments.last().unwrap()
                }
            })
            .id
    }

    /// Point at arc-length fraction `s`, clamped to `[0, 1]`.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let target = s.clamp(0.0, 1.0) * self.length();
        let i = match self.cumulative.iter().position(|&c| c >= target) {
            Some(0) => return self.waypoints[0],
            Some(i) => i,
            None => return *self.waypoints.last().unwrap(),
        };
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let f = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        let (a, b) = (self.waypoints[i - 1], self.waypoints[i]);
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
    }

    pub fn pose_at(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, 1.0);
        Pose {
            position: self.point_at(s),
            path_parameter: s,
        }
    }

    /// Arc-length fraction of the path point closest to `p`, and its distance.
    pub fn project(&self, p: [f64; 2]) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for (i, w) in self.waypoints.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let f = if len2 > 0.0 {
                (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = [a[0] + f * ab[0], a[1] + f * ab[1]];
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            if d < best.1 {
                let arc = self.cumulative[i] + f * len2.sqrt();
                best = (arc / self.length(), d);
            }
        }
        best
    }

    /// `n` poses evenly spaced in `s` over the whole path.
    pub fn sweep(&self, n: usize) -> Vec<Pose> {
        match n {
            0 => Vec::new(),
            1 => vec![self.pose_at(0.0)],
            _ => (0..n).map(|i| self.pose_at(i as f64 / (n - 1) as f64)).collect(),
        }
    }
}

/// Three-part tasks shipped with the crate.
pub mod bundled {
    use super::Task;

    pub const CLEANING_JSON: &str = include_str!("../../assets/tasks/cleaning.json");
    pub const SHELVING_JSON: &str = include_str!("../../assets/tasks/shelving.json");

    /// Pick, place, drag; first segment withheld.
    pub fn cleaning() -> Task {
        serde_json::from_str(CLEANING_JSON).expect("bundled task is valid")
    }

    /// Reach, lift, slide; last segment withheld.
    pub fn shelving() -> Task {
        serde_json::from_str(SHELVING_JSON).expect("bundled task is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thirds() -> Vec<Segment> {
        vec![
            Segment { id: 1, start: 0.0, end: 1.0 / 3.0 },
            Segment { id: 2, start: 1.0 / 3.0, end: 2.0 / 3.0 },
            Segment { id: 3, start: 2.0 / 3.0, end: 1.0 },
        ]
    }

    fn line() -> Task {
        Task::new("line", vec![[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]], thirds(), Some(1)).unwrap()
    }

    #[test]
    fn arc_length_parameterization() {
        let t = line();
        assert_eq!(t.length(), 3.0);
        assert_eq!(t.point_at(0.0), [0.0, 0.0]);
        assert_eq!(t.point_at(1.0 / 3.0), [1.0, 0.0]);
        assert_eq!(t.point_at(0.5), [1.0, 0.5]);
        assert_eq!(t.point_at(1.0), [1.0, 2.0]);
        let (s, d) = t.project([1.2, 1.0]);
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
        assert!((d - 0.2).abs() < 1e-12);
    }

    #[test]
    fn segment_lookup() {
        let t = line();
        assert_eq!(t.segment_of(0.0), 1);
        assert_eq!(t.segment_of(0.2), 1);
        assert_eq!(t.segment_of(1.0 / 3.0), 2);
        assert_eq!(t.segment_of(0.9), 3);
        assert_eq!(t.segment_of(1.0), 3);
        assert_eq!(t.withheld_segment().unwrap().id, 1);
    }

    #[test]
    fn partition_is_validated() {
        let mut gap = thirds();
        gap[1].start = 0.4;
        assert!(Task::new("x", vec![[0.0, 0.0], [1.0, 0.0]], gap, None).is_err());
        let mut short = thirds();
        short.pop();
        assert!(Task::new("x", vec![[0.0, 0.0], [1.0, 0.0]], short, None).is_err());
        assert!(Task::new("x", vec![[0.0, 0.0], [1.0, 0.0]], thirds(), Some(9)).is_err());
        assert!(Task::new("x", vec![[0.0, 0.0], [0.0, 0.0]], thirds(), None).is_err());
        let mut dup = thirds();
        dup[2].id = 1;
        assert!(Task::new("x", vec![[0.0, 0.0], [1.0, 0.0]], dup, None).is_err());
    }

    #[test]
    fn bundled_tasks_parse() {
        let c = bundled::cleaning();
        assert_eq!(c.segments().len(), 3);
        assert_eq!(c.withheld(), Some(1));
        let s = bundled::shelving();
        assert_eq!(s.withheld(), Some(3));
        let json = serde_json::to_string(&c).unwrap();
        let back: Task = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sweep_spacing() {
        let t = line();
        let poses = t.sweep(200);
        assert_eq!(poses.len(), 200);
        assert_eq!(poses[0].path_parameter, 0.0);
        assert_eq!(poses[199].path_parameter, 1.0);
    }
}
