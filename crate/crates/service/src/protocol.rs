//! Wire format shared with browser clients.
//!
//! Every frame is a JSON text message `{"type": ..., "seq": ..., "payload": ...}`.
//! Unknown fields anywhere in a frame are ignored.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use ringwire_core::forcefield::FieldMode;
use ringwire_core::geometry::{Pose, Vec3};
use ringwire_core::metrics::{BlockStats, TrialMetrics};
use ringwire_core::simulator::{OperatorCommand, TrialPhase};

/// Operator input, latched until the next one arrives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InputMessage {
    /// m/s
    pub linear: [f64; 3],
    /// rad/s
    pub angular: [f64; 3],
    pub grip: bool,
    /// Client clock, seconds. Recorded, not interpreted.
    #[serde(default)]
    pub timestamp: f64,
}

impl InputMessage {
    pub fn to_command(&self) -> OperatorCommand {
        OperatorCommand {
            linear: Vec3::from(self.linear),
            angular: Vec3::from(self.angular),
            grip_closed: self.grip,
            timestamp: self.timestamp,
        }
    }

    pub fn from_command(cmd: &OperatorCommand) -> Self {
        Self {
            linear: cmd.linear.into(),
            angular: cmd.angular.into(),
            grip: cmd.grip_closed,
            timestamp: cmd.timestamp,
        }
    }
}

/// Session flow verbs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb")]
pub enum ControlMessage {
    /// Begin (or restart) a session. Missing fields fall back to the
    /// server's defaults; `day` resumes a session part way through.
    StartSession {
        #[serde(default)]
        subject: Option<String>,
        #[serde(default)]
        group: Option<FieldMode>,
        #[serde(default)]
        day: Option<u8>,
    },
    StartTrial,
    AbortTrial,
    NextDay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    /// No session started.
    Idle,
    /// Waiting for `StartTrial`.
    Ready,
    InTrial,
    /// All trials of the day done; waiting for `NextDay`.
    DayComplete,
    Finished,
}

/// Published at a fixed rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub session: SessionPhase,
    pub phase: TrialPhase,
    /// Simulation step within the current trial.
    pub step: u64,
    /// Simulated seconds since the trial started.
    pub sim_time: f64,
    /// Held running time, the trial clock.
    pub elapsed: f64,
    pub ring: Pose,
    pub instrument: Pose,
    pub grip_closed: bool,
    pub holding_ring: bool,
    /// 0 is red, 1 is yellow.
    pub color: f64,
    pub deviation_mm: f64,
    /// Radians.
    pub angular_deviation: f64,
    /// Meters along the wire reached so far.
    pub progress: f64,
    pub day: u8,
    pub trial: u8,
    pub field: FieldMode,
}

/// Current place in the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub subject: String,
    pub group: FieldMode,
    pub session: SessionPhase,
    pub day: u8,
    pub trial: u8,
    pub days: u8,
    pub trials_per_day: u8,
    /// Field of the current or next trial.
    pub field: FieldMode,
    pub path_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: String,
    pub day: u8,
    pub trial: u8,
    pub field: FieldMode,
    pub phase: TrialPhase,
    pub elapsed: f64,
    pub drops: u32,
    pub abort_reason: Option<String>,
    pub metrics: Option<TrialMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    pub day: u8,
    pub completed: usize,
    pub aborted: usize,
    pub stats: BlockStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Verb not valid in the current session phase.
    InvalidPhase,
    InvalidParameter,
    /// Server queue full; retry.
    Busy,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMessage {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorMessage {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClientMessage {
    Input(InputMessage),
    Control(ControlMessage),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ServerMessage {
    State(StateUpdate),
    Session(SessionInfo),
    TrialResult(TrialResult),
    DaySummary(DaySummary),
    Error(ErrorMessage),
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("malformed frame: {0}")]
    Malformed(serde_json::Error),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("bad {kind} payload: {source}")]
    Payload { kind: String, source: serde_json::Error },
}

/// A message with a `type` tag and a JSON payload.
pub trait Message: Sized {
    fn kind(&self) -> &'static str;
    fn payload(&self) -> Result<Value, serde_json::Error>;
    fn from_parts(kind: &str, payload: Value) -> Result<Self, DecodeError>;
}

fn parse<T: DeserializeOwned>(kind: &str, payload: Value) -> Result<T, DecodeError> {
    serde_json::from_value(payload).map_err(|source| DecodeError::Payload { kind: kind.to_string(), source })
}

impl Message for ClientMessage {
    fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Input(_) => "input",
            ClientMessage::Control(_) => "control",
        }
    }

    fn payload(&self) -> Result<Value, serde_json::Error> {
        match self {
            ClientMessage::Input(m) => serde_json::to_value(m),
            ClientMessage::Control(m) => serde_json::to_value(m),
        }
    }

    fn from_parts(kind: &str, payload: Value) -> Result<Self, DecodeError> {
        match kind {
            "input" => parse(kind, payload).map(ClientMessage::Input),
            "control" => parse(kind, payload).map(ClientMessage::Control),
            other => Err(DecodeError::UnknownType(other.to_string())),
        }
    }
}

impl Message for ServerMessage {
    fn kind(&self) -> &'static str {
        match self {
            ServerMessage::State(_) => "state",
            ServerMessage::Session(_) => "session",
            ServerMessage::TrialResult(_) => "trial_result",
            ServerMessage::DaySummary(_) => "day_summary",
            ServerMessage::Error(_) => "error",
        }
    }

    fn payload(&self) -> Result<Value, serde_json::Error> {
        match self {
            ServerMessage::State(m) => serde_json::to_value(m),
            ServerMessage::Session(m) => serde_json::to_value(m),
            ServerMessage::TrialResult(m) => serde_json::to_value(m),
            ServerMessage::DaySummary(m) => serde_json::to_value(m),
            ServerMessage::Error(m) => serde_json::to_value(m),
        }
    }

    fn from_parts(kind: &str, payload: Value) -> Result<Self, DecodeError> {
        match kind {
            "state" => parse(kind, payload).map(ServerMessage::State),
            "session" => parse(kind, payload).map(ServerMessage::Session),
            "trial_result" => parse(kind, payload).map(ServerMessage::TrialResult),
            "day_summary" => parse(kind, payload).map(ServerMessage::DaySummary),
            "error" => parse(kind, payload).map(ServerMessage::Error),
            other => Err(DecodeError::UnknownType(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope<M> {
    pub seq: u64,
    pub message: M,
}

#[derive(Serialize)]
struct RawOut<'a> {
    #[serde(rename = "type")]
    kind: &'a str,
    seq: u64,
    payload: Value,
}

#[derive(Deserialize)]
struct RawIn {
    #[serde(rename = "type")]
    kind: String,
    seq: u64,
    #[serde(default)]
    payload: Value,
}

pub fn encode<M: Message>(seq: u64, message: &M) -> String {
    let payload = message.payload().expect("protocol messages serialize");
    serde_json::to_string(&RawOut { kind: message.kind(), seq, payload }).expect("envelope serializes")
}

pub fn decode<M: Message>(text: &str) -> Result<Envelope<M>, DecodeError> {
    let raw: RawIn = serde_json::from_str(text).map_err(DecodeError::Malformed)?;
    Ok(Envelope { seq: raw.seq, message: M::from_parts(&raw.kind, raw.payload)? })
}
