//! Wire frames and their line codec.
//!
//! A frame is one line of canonical JSON terminated by `\n`. The same
//! encoding is used on the agent socket, the websocket endpoint and in the
//! event log.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::{canonical_deserialize, canonical_serialize, CanonicalError};
use crate::geometry::Pose2D;
use crate::model::{AgentId, C3Event, Detection, MissionId, MissionState, MissionType, PlatformDescriptor, Violation};

pub const PROTOCOL_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameType {
    Hello,
    Welcome,
    Telemetry,
    Alert,
    MissionTrigger,
    MissionStatus,
    Command,
    Detection,
    CorrRequest,
    CorrVerdict,
    Event,
    Error,
    Bye,
}

impl FrameType {
    pub const ALL: [FrameType; 13] = [
        FrameType::Hello,
        FrameType::Welcome,
        FrameType::Telemetry,
        FrameType::Alert,
        FrameType::MissionTrigger,
        FrameType::MissionStatus,
        FrameType::Command,
        FrameType::Detection,
        FrameType::CorrRequest,
        FrameType::CorrVerdict,
        FrameType::Event,
        FrameType::Error,
        FrameType::Bye,
    ];
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("unit variant");
        f.write_str(v.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub v: u8,
    #[serde(rename = "type")]
    pub frame_type: FrameType,
    pub seq: u64,
    pub tick: u64,
    pub src: AgentId,
    /// An agent id, `"hub"` or `"*"`.
    pub dst: AgentId,
    pub payload: Value,
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("frame is not valid UTF-8")]
    Utf8,
    #[error("frame is not terminated by a newline")]
    Unterminated,
    #[error("unsupported protocol version {0}")]
    Version(u8),
    #[error("sequence numbers start at 1")]
    ZeroSeq,
    #[error("payload must be a JSON object")]
    PayloadNotObject,
    #[error("frame is not in canonical form")]
    NotCanonical,
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

impl Frame {
    pub fn new<P: Serialize>(
        frame_type: FrameType,
        seq: u64,
        tick: u64,
        src: impl Into<AgentId>,
        dst: impl Into<AgentId>,
        payload: &P,
    ) -> Frame {
        Frame {
            v: PROTOCOL_VERSION,
            frame_type,
            seq,
            tick,
            src: src.into(),
            dst: dst.into(),
            payload: serde_json::to_value(payload).expect("payload types serialize"),
        }
    }

    /// Decodes the payload into a typed struct.
    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, serde_json::Error> {
        T::deserialize(&self.payload)
    }

    /// Canonical bytes without the trailing newline.
    pub fn to_bytes(&self) -> Result<Vec<u8>, CodecError> {
        Ok(canonical_serialize(self)?)
    }

    pub fn to_line(&self) -> Result<String, CodecError> {
        let mut s = String::from_utf8(self.to_bytes()?).map_err(|_| CodecError::Utf8)?;
        s.push('\n');
        Ok(s)
    }

    fn check(&self) -> Result<(), CodecError> {
        if self.v != PROTOCOL_VERSION {
            return Err(CodecError::Version(self.v));
        }
        if self.seq == 0 {
            return Err(CodecError::ZeroSeq);
        }
        if !self.payload.is_object() {
            return Err(CodecError::PayloadNotObject);
        }
        Ok(())
    }
}

/// Encodes a frame as one newline-terminated line.
pub fn encode(frame: &Frame) -> Result<Vec<u8>, CodecError> {
    frame.check()?;
    let mut bytes = frame.to_bytes()?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Decodes one newline-terminated line. Lines that are valid JSON but not in
/// canonical form are rejected so that decode/encode is byte-identical.
pub fn decode(line: &[u8]) -> Result<Frame, CodecError> {
    let body = line.strip_suffix(b"\n").ok_or(CodecError::Unterminated)?;
    let frame = decode_body(body)?;
    if frame.to_bytes()? != body {
        return Err(CodecError::NotCanonical);
    }
    Ok(frame)
}

/// Lenient decode of a line body (no newline, any JSON layout).
pub fn decode_body(body: &[u8]) -> Result<Frame, CodecError> {
    std::str::from_utf8(body).map_err(|_| CodecError::Utf8)?;
    let frame: Frame = canonical_deserialize(body)?;
    frame.check()?;
    Ok(frame)
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Frame(Frame),
    C3(C3Event),
}

impl LogRecord {
    pub fn tick(&self) -> u64 {
        match self {
            LogRecord::Frame(f) => f.tick,
            LogRecord::C3(e) => e.tick,
        }
    }
}

// ---- payloads -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloPayload {
    pub descriptor: PlatformDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelcomePayload {
    pub agent_id: AgentId,
    pub tick_dt: f64,
    pub detection_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPayload {
    pub pose: Pose2D,
    pub battery: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrying: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub following: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<String>,
    /// Arm end-effector samples in the arm plane, emitted while tracing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Vec<crate::geometry::Point>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertPayload {
    pub kind: String,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerPayload {
    pub mission_type: MissionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executor: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beneficiary: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_id: Option<u64>,
}

impl TriggerPayload {
    pub fn of(mission_type: MissionType) -> Self {
        Self { mission_type, executor: None, beneficiary: None, proposal_id: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusPayload {
    pub mission_id: MissionId,
    pub mission_type: MissionType,
    pub state: MissionState,
    pub event: Option<String>,
    pub cause: String,
    pub participants: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandPayload {
    pub verb: crate::behaviors::Verb,
    #[serde(default)]
    pub args: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mission: Option<MissionId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPayload {
    pub detection: Detection,
    pub observer: Pose2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mission: Option<MissionId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPayload {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mission: Option<MissionId>,
    #[serde(default)]
    pub data: Value,
}

impl EventPayload {
    pub fn new(name: &str, mission: Option<MissionId>, data: Value) -> Self {
        Self { name: name.to_owned(), mission, data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    /// Seq of the frame that caused the error, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_seq: Option<u64>,
}

impl ErrorPayload {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_owned(), message: message.into(), violations: Vec::new(), ref_seq: None }
    }

    pub fn about(mut self, seq: u64) -> Self {
        self.ref_seq = Some(seq);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByePayload {
    pub reason: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn frame() -> Frame {
        Frame::new(FrameType::Telemetry, 3, 40, "wheeled-1", "hub", &json!({"battery": 0.5}))
    }

    #[test]
    fn wire_field_names() {
        let line = frame().to_line().unwrap();
        assert_eq!(
            line,
            "{\"dst\":\"hub\",\"payload\":{\"battery\":0.5},\"seq\":3,\"src\":\"wheeled-1\",\"tick\":40,\"type\":\"TELEMETRY\",\"v\":1}\n"
        );
    }

    #[test]
    fn roundtrip() {
        let f = frame();
        let bytes = encode(&f).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(matches!(decode(b"{}"), Err(CodecError::Unterminated)));
        let mut f = frame();
        f.v = 2;
        assert!(matches!(encode(&f), Err(CodecError::Version(2))));
        let spaced = b"{\"dst\": \"hub\",\"payload\":{},\"seq\":1,\"src\":\"a\",\"tick\":0,\"type\":\"BYE\",\"v\":1}\n";
        assert!(matches!(decode(spaced), Err(CodecError::NotCanonical)));
        assert!(decode_body(&spaced[..spaced.len() - 1]).is_ok());
        let extra = b"{\"dst\":\"hub\",\"extra\":1,\"payload\":{},\"seq\":1,\"src\":\"a\",\"tick\":0,\"type\":\"BYE\",\"v\":1}\n";
        assert!(decode(extra).is_err());
        let unknown_type = b"{\"dst\":\"hub\",\"payload\":{},\"seq\":1,\"src\":\"a\",\"tick\":0,\"type\":\"PING\",\"v\":1}\n";
        assert!(decode(unknown_type).is_err());
    }

    #[test]
    fn type_names() {
        assert_eq!(FrameType::CorrVerdict.to_string(), "CORR_VERDICT");
        assert_eq!(FrameType::MissionTrigger.to_string(), "MISSION_TRIGGER");
    }

    #[test]
    fn log_record_dispatch() {
        let f = LogRecord::Frame(frame());
        let line = crate::canonical::canonical_string(&f).unwrap();
        let back: LogRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, f);
        let c3 = json!({"detail":{},"event_id":1,"initiator":"a","kind":"cooperation","mission":null,"responder":"b","tick":2});
        assert!(matches!(serde_json::from_value::<LogRecord>(c3).unwrap(), LogRecord::C3(_)));
    }
}
