//! JSON messages exchanged with the operator console.
//!
//! Every message is one WebSocket text frame carrying an object with a
//! `type` discriminator. The server sends `frame`, `report`, `error` and
//! `busy`; the client sends `cmd`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{SessionFrame, SessionReport};

/// Where the live session is in the teaching or perception protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    #[serde(rename = "demo1")]
    Demo1,
    #[serde(rename = "demo2")]
    Demo2,
    Retraining,
    Done,
    /// Perception trial: first stimulus interval.
    TrialFirst,
    TrialSecond,
    /// Both intervals shown; waiting for the forced choice.
    TrialChoice,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Demo1 => "demo1",
            Phase::Demo2 => "demo2",
            Phase::Retraining => "retraining",
            Phase::Done => "done",
            Phase::TrialFirst => "trial_first",
            Phase::TrialSecond => "trial_second",
            Phase::TrialChoice => "trial_choice",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub u: f64,
    pub setpoint_psi: f64,
    pub measured_psi: f64,
    pub fill: bool,
    pub vent: bool,
    pub phase: Phase,
    pub fault: Option<String>,
}

impl TelemetryFrame {
    pub fn new(frame: &SessionFrame, phase: Phase, fault: Option<String>) -> Self {
        TelemetryFrame {
            t: frame.t,
            x: frame.pose.position[0],
            y: frame.pose.position[1],
            s: frame.pose.path_parameter,
            u: frame.uncertainty.value(),
            setpoint_psi: frame.setpoint.as_psi(),
            measured_psi: frame.measured.as_psi(),
            fill: frame.valves.fill_open,
            vent: frame.valves.vent_open,
            phase,
            fault,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMessage {
    pub teaching_time_s: f64,
    pub correct_segment_pct: f64,
    pub improvement_pct: f64,
}

impl ReportMessage {
    /// None unless the session produced all three metrics.
    pub fn from_report(r: &SessionReport) -> Option<Self> {
        Some(ReportMessage {
            teaching_time_s: r.teaching_time_s?,
            correct_segment_pct: r.correct_segment_pct?,
            improvement_pct: r.improvement_pct?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(TelemetryFrame),
    Report(ReportMessage),
    Error {
        /// Sequence number of the rejected command, when there was one.
        seq: Option<u64>,
        message: String,
    },
    Busy {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    StartDemo,
    EndDemo,
    /// Teacher pose. Without `x`/`y` the pose is the path point at `s`;
    /// without `t` the service stamps the arrival time.
    SetPose {
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t: Option<f64>,
    },
    MarkSegment {
        start: f64,
        end: f64,
    },
    Retrain,
    StartTrial,
    SubmitChoice {
        chose_second: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    pub seq: u64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Cmd(CommandEnvelope),
}

pub fn encode<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(msg).expect("wire messages always serialize")
}

pub fn decode_client(text: &str) -> Result<ClientMessage> {
    serde_json::from_str(text).map_err(|e| Error::Protocol(format!("bad command: {e}")))
}

pub fn decode_server(text: &str) -> Result<ServerMessage> {
    serde_json::from_str(text).map_err(|e| Error::Protocol(format!("bad server message: {e}")))
}

/// Rejects commands whose sequence number does not increase.
#[derive(Debug, Clone, Copy, Default)]
pub struct SeqGuard {
    last: Option<u64>,
}

impl SeqGuard {
    pub fn admit(&mut self, seq: u64) -> Result<()> {
        if let Some(last) = self.last {
            if seq <= last {
                return Err(Error::Protocol(format!("out-of-order command: seq {seq} after {last}")));
            }
        }
        self.last = Some(seq);
        Ok(())
    }
}
