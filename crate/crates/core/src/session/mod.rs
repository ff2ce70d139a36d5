//! The two-demonstration teaching protocol.
//!
//! A teacher demonstrates the whole task while the sleeve renders the
//! learner's uncertainty, picks the stretch of path that felt uncertain,
//! demonstrates it again, and the learner retrains. The protocol reports
//! teaching time, how much of the second demonstration fell on the withheld
//! segment, and how much the learner's uncertainty dropped.

mod feedback;
pub(crate) mod protocol;
pub mod task;
pub(crate) mod teacher;

pub use feedback::{FeedbackLoop, SessionFrame};
pub use protocol::{
    run_feedback_demo, run_protocol, write_frames_csv, ProtocolOutcome, SessionConfig, SessionReport, PROBE_POSES,
};
pub use task::{Segment, SegmentId, Task};
pub use teacher::{OracleTeacher, ReteachTarget, ScriptFile, ScriptPose, ScriptTeacher, Teacher, ThresholdTeacher};

use crate::learner::Demonstration;

/// Seconds between the first and last samples of `demo`.
pub fn teaching_time(demo: &Demonstration) -> f64 {
    demo.teaching_time()
}

/// Percent of `demo`'s path-parameter travel inside the task's withheld segment.
///
/// Travel is summed over consecutive samples, so pausing in place adds
/// nothing. A demo that never moves falls back to the share of samples
/// inside the segment. Tasks without a withheld segment score 0.
pub fn correct_segment(demo: &Demonstration, task: &Task) -> f64 {
    let Some(seg) = task.withheld_segment() else {
        return 0.0;
    };
    let samples = demo.samples();
    if samples.is_empty() {
        return 0.0;
    }
    // summing the travel outside keeps a demo that never leaves the segment at exactly 100
    let (mut outside, mut total) = (0.0, 0.0);
    for w in samples.windows(2) {
        let (a, b) = (w[0].pose.path_parameter, w[1].pose.path_parameter);
        let (lo, hi) = (a.min(b), a.max(b));
        let span = hi - lo;
        total += span;
        outside += (seg.start - lo).clamp(0.0, span) + (hi - seg.end).clamp(0.0, span);
    }
    let pct = if total > 0.0 {
        100.0 * (1.0 - outside.min(total) / total)
    } else {
        let hits = samples
            .iter()
            .filter(|s| task.segment_of(s.pose.path_parameter) == seg.id)
            .count();
        100.0 * hits as f64 / samples.len() as f64
    };
    pct.clamp(0.0, 100.0)
}
