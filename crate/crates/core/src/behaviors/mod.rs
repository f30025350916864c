//! Per-platform controllers.
//!
//! A controller is stepped once per tick with a read-only view of the world
//! and the frames delivered to it since its last step. It answers with
//! outgoing frames and the world commands its body executes this tick.

mod aerial;
mod fixed_camera;
mod operator;
mod quadruped;
mod wheeled;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geometry::Point;
use crate::model::{AgentId, MissionId, PlatformDescriptor, PlatformKind, TargetClass, HUB};
use crate::protocol::{Frame, FrameType, WelcomePayload};
use crate::world::{WorldCommand, WorldState};

pub use aerial::Aerial;
pub use fixed_camera::FixedCamera;
pub use operator::{FollowOrder, MissionTimeline, Operator, OperatorScript, ScriptedTrigger, VerdictPolicy};
pub use quadruped::Quadruped;
pub use wheeled::{Wheeled, WheeledParams};

/// Telemetry decimation for mobile agents.
pub const TELEMETRY_EVERY: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Stand,
    Unstow,
    Trace,
    Goto,
    Scan,
    Grasp,
    Release,
    Follow,
    Hold,
}

impl Verb {
    pub const ALL: [Verb; 9] =
        [Verb::Stand, Verb::Unstow, Verb::Trace, Verb::Goto, Verb::Scan, Verb::Grasp, Verb::Release, Verb::Follow, Verb::Hold];

    /// Whether a platform can execute this verb at all.
    pub fn allowed_for(self, desc: &PlatformDescriptor) -> Result<(), String> {
        let ok = match self {
            Verb::Stand | Verb::Unstow | Verb::Trace | Verb::Scan => desc.kind == PlatformKind::Quadruped,
            Verb::Grasp | Verb::Release => desc.has_manipulator,
            Verb::Goto | Verb::Hold => desc.max_speed > 0.0,
            Verb::Follow => desc.kind == PlatformKind::Aerial,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("verb '{self}' is not supported by {} '{}'", desc.kind, desc.agent_id))
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("unit variant");
        f.write_str(v.as_str().expect("string"))
    }
}

/// A verb with its arguments, as carried in a COMMAND payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", content = "args", rename_all = "snake_case")]
pub enum BehaviorCommand {
    Stand,
    Unstow,
    Trace(TraceArgs),
    Goto(GotoArgs),
    Scan(ScanArgs),
    Grasp { class: TargetClass },
    Release { beneficiary: Option<AgentId> },
    Follow { target: AgentId, distance: f64 },
    Hold,
}

impl BehaviorCommand {
    pub fn verb(&self) -> Verb {
        match self {
            BehaviorCommand::Stand => Verb::Stand,
            BehaviorCommand::Unstow => Verb::Unstow,
            BehaviorCommand::Trace(_) => Verb::Trace,
            BehaviorCommand::Goto(_) => Verb::Goto,
            BehaviorCommand::Scan(_) => Verb::Scan,
            BehaviorCommand::Grasp { .. } => Verb::Grasp,
            BehaviorCommand::Release { .. } => Verb::Release,
            BehaviorCommand::Follow { .. } => Verb::Follow,
            BehaviorCommand::Hold => Verb::Hold,
        }
    }

    /// Parses a COMMAND payload (`{verb, args, mission}`).
    pub fn from_payload(payload: &Value) -> Result<(BehaviorCommand, Option<MissionId>), serde_json::Error> {
        let mission = payload.get("mission").filter(|m| !m.is_null()).map(MissionId::deserialize).transpose()?;
        let mut body = serde_json::Map::new();
        if let Some(v) = payload.get("verb") {
            body.insert("verb".into(), v.clone());
        }
        match payload.get("args") {
            Some(a) if !a.is_null() && a.as_object().is_none_or(|o| !o.is_empty()) => {
                body.insert("args".into(), a.clone());
            }
            _ => {}
        }
        let cmd = BehaviorCommand::deserialize(Value::Object(body))?;
        Ok((cmd, mission))
    }

    pub fn to_payload(&self, mission: Option<&MissionId>) -> Value {
        let mut v = serde_json::to_value(self).expect("commands serialize");
        let obj = v.as_object_mut().expect("tagged enum is an object");
        obj.entry("args").or_insert_with(|| Value::Object(Default::default()));
        if let Some(m) = mission {
            obj.insert("mission".into(), Value::String(m.to_string()));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceArgs {
    pub radius: f64,
    pub samples: usize,
    pub side: f64,
    /// Circle centre in the arm plane.
    pub arm_center: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GotoArgs {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub stop_within: f64,
    /// EVENT name emitted on arrival.
    pub report: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    /// Agent that must stay in view while moving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watch: Option<AgentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPattern {
    #[default]
    RotateInPlace,
    RotateThenLawnmower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanArgs {
    pub target: TargetClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<AgentId>,
    #[serde(default)]
    pub pattern: SearchPattern,
}

/// Frames and world commands produced by one controller step.
#[derive(Debug, Default)]
pub struct AgentOutput {
    pub frames: Vec<Frame>,
    pub commands: Vec<WorldCommand>,
}

/// Per-agent frame stamping: owns the sender's seq counter.
#[derive(Debug, Clone)]
pub struct Outbox {
    pub agent: AgentId,
    seq: u64,
}

impl Outbox {
    pub fn new(agent: AgentId) -> Self {
        Self { agent, seq: 0 }
    }

    pub fn last_seq(&self) -> u64 {
        self.seq
    }

    /// Builds the next frame from this agent and returns its seq.
    pub fn send<P: Serialize>(
        &mut self,
        out: &mut AgentOutput,
        tick: u64,
        frame_type: FrameType,
        dst: impl Into<AgentId>,
        payload: &P,
    ) -> u64 {
        self.seq += 1;
        out.frames.push(Frame::new(frame_type, self.seq, tick, &self.agent, dst, payload));
        self.seq
    }

    pub fn event(&mut self, out: &mut AgentOutput, tick: u64, name: &str, mission: Option<&MissionId>, data: Value) -> u64 {
        let payload = crate::protocol::EventPayload::new(name, mission.cloned(), data);
        self.send(out, tick, FrameType::Event, HUB, &payload)
    }
}

/// Session handshake shared by every controller.
#[derive(Debug, Clone, Default)]
pub struct Handshake {
    pub hello_sent: bool,
    pub welcome: Option<WelcomePayload>,
}

impl Handshake {
    /// Sends HELLO on the first step. Returns true once WELCOME has arrived.
    pub fn drive(&mut self, outbox: &mut Outbox, desc: &PlatformDescriptor, tick: u64, inbox: &[Frame], out: &mut AgentOutput) -> bool {
        if !self.hello_sent {
            self.hello_sent = true;
            let hello = crate::protocol::HelloPayload { descriptor: desc.clone() };
            outbox.send(out, tick, FrameType::Hello, HUB, &hello);
        }
        for f in inbox {
            if f.frame_type == FrameType::Welcome {
                if let Ok(w) = f.payload_as::<WelcomePayload>() {
                    self.welcome = Some(w);
                }
            }
        }
        self.welcome.is_some()
    }

    pub fn threshold(&self) -> f64 {
        self.welcome.as_ref().map_or(0.6, |w| w.detection_threshold)
    }
}

/// An in-process agent.
pub trait Controller: Send {
    fn agent_id(&self) -> &AgentId;
    fn descriptor(&self) -> &PlatformDescriptor;
    fn step(&mut self, world: &WorldState, inbox: &[Frame], out: &mut AgentOutput);

    /// Mission states as this agent has observed them, if it keeps track.
    fn mission_timeline(&self) -> Option<&MissionTimeline> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn command_payload_shape() {
        let cmd = BehaviorCommand::Grasp { class: TargetClass::BatteryBox };
        let p = cmd.to_payload(Some(&MissionId::new("M3-1")));
        assert_eq!(p, json!({"verb": "grasp", "args": {"class": "battery_box"}, "mission": "M3-1"}));
        let (back, m) = BehaviorCommand::from_payload(&p).unwrap();
        assert_eq!(back, cmd);
        assert_eq!(m.unwrap(), "M3-1");

        let hold = BehaviorCommand::Hold.to_payload(None);
        assert_eq!(hold, json!({"verb": "hold", "args": {}}));
        assert_eq!(BehaviorCommand::from_payload(&hold).unwrap().0, BehaviorCommand::Hold);
    }

    #[test]
    fn grasp_needs_manipulator() {
        let mut d = PlatformDescriptor::standard("q", PlatformKind::Quadruped);
        assert!(Verb::Grasp.allowed_for(&d).is_ok());
        d.has_manipulator = false;
        assert!(Verb::Grasp.allowed_for(&d).is_err());
        d.kind = PlatformKind::Wheeled;
        assert!(Verb::Trace.allowed_for(&d).is_err());
        assert!(Verb::Goto.allowed_for(&d).is_ok());
        d.max_speed = 0.0;
        assert!(Verb::Hold.allowed_for(&d).is_err());
    }

    #[test]
    fn verbs_serialize_snake_case() {
        for v in Verb::ALL {
            let s = serde_json::to_string(&v).unwrap();
            assert_eq!(s, format!("\"{v}\""));
        }
    }
}
