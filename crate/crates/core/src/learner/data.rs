use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::task::{SegmentId, Task};
use crate::types::Pose;

pub type Action = [f64; 2];

/// A pose reported by a teacher at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoSample {
    pub t: f64,
    pub pose: Pose,
    pub action: Action,
}

/// One line of a demonstration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct DemoLine {
    t: f64,
    x: f64,
    y: f64,
    s: f64,
    ax: f64,
    ay: f64,
}

/// Visited poses and the demonstrated velocity commands, in time order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Demonstration {
    samples: Vec<DemoSample>,
}

impl Demonstration {
    pub fn new(samples: Vec<DemoSample>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::invalid("demonstration timestamps must strictly increase"));
        }
        Ok(Demonstration { samples })
    }

    /// Builds a demonstration whose actions are the forward-difference pose
    /// velocities; the final sample repeats the last velocity.
    pub fn from_poses(poses: &[TimedPose]) -> Result<Self> {
        let mut samples = Vec::with_capacity(poses.len());
        for (i, tp) in poses.iter().enumerate() {
            let action = if poses.len() < 2 {
                [0.0, 0.0]
            } else {
                let (a, b) = if i + 1 < poses.len() {
                    (poses[i], poses[i + 1])
                } else {
                    (poses[i - 1], poses[i])
                };
                let dt = b.t - a.t;
                if !(dt > 0.0) {
                    return Err(Error::invalid("demonstration timestamps must strictly increase"));
                }
                [
                    (b.pose.position[0] - a.pose.position[0]) / dt,
                    (b.pose.position[1] - a.pose.position[1]) / dt,
                ]
            };
            samples.push(DemoSample {
                t: tp.t,
                pose: tp.pose,
                action,
            });
        }
        Demonstration::new(samples)
    }

    pub fn samples(&self) -> &[DemoSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time between the first and last samples.
    pub fn teaching_time(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// JSON lines, one `{t, x, y, s, ax, ay}` object per sample.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.samples {
            let line = DemoLine {
                t: s.t,
                x: s.pose.position[0],
                y: s.pose.position[1],
                s: s.pose.path_parameter,
                ax: s.action[0],
                ay: s.action[1],
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i as u64 + 1,
                message,
            };
            let l: DemoLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let pose = Pose::new([l.x, l.y], l.s).map_err(|e| parse_err(e.to_string()))?;
            samples.push(DemoSample {
                t: l.t,
                pose,
                action: [l.ax, l.ay],
            });
        }
        Demonstration::new(samples)
    }
}

/// Where a training pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSource {
    pub demo: usize,
    pub sample: usize,
    pub segment: SegmentId,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingSet {
    pub pairs: Vec<(Pose, Action)>,
    pub sources: Vec<SampleSource>,
    /// Segment ids that contributed samples.
    pub provenance: BTreeSet<SegmentId>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Appends every sample of `demo`, tagged as demonstration `demo_index`.
    pub fn append(&mut self, demo: &Demonstration, demo_index: usize, task: &Task) {
        for (i, s) in demo.samples().iter().enumerate() {
            let segment = task.segment_of(s.pose.path_parameter);
            self.pairs.push((s.pose, s.action));
            self.sources.push(SampleSource {
                demo: demo_index,
                sample: i,
                segment,
            });
            self.provenance.insert(segment);
        }
    }
}

/// Pools demonstrations, dropping every sample whose pose lies in a removed segment.
pub fn make_training_set(demos: &[Demonstration], removed: &BTreeSet<SegmentId>, task: &Task) -> Result<TrainingSet> {
    if demos.is_empty() {
        return Err(Error::invalid("no demonstrations"));
    }
    if let Some(id) = removed.iter().find(|id| task.segment(**id).is_none()) {
        return Err(Error::InvalidTask(format!("cannot remove unknown segment {id}")));
    }
    let mut set = TrainingSet::default();
    for (d, demo) in demos.iter().enumerate() {
        for (i, s) in demo.samples().iter().enumerate() {
            let segment = task.segment_of(s.pose.path_parameter);
            if removed.contains(&segment) {
                continue;
            }
            set.pairs.push((s.pose, s.action));
            set.sources.push(SampleSource {
                demo: d,
                sample: i,
                segment,
            });
            set.provenance.insert(segment);
        }
    }
    if set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(set)
}
