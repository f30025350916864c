//! The digital-twin hub: sessions, routing, governance dispatch and the
//! event log.
//!
//! `TwinHub` is transport-agnostic. Callers hand it frames tagged with a
//! connection id and drain [`Outbound`] deliveries; [`net`] binds it to TCP
//! and a websocket endpoint, the simulator binds it to in-process agents.

pub mod log;
pub mod net;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::behaviors::BehaviorCommand;
use crate::governance::engine::{Effect, Engine, Proposal, ProposalStatus, Registry, TwinAgent};
use crate::model::{
    validate_platform, AgentId, C3Event, CorroborationRequest, CorroborationVerdict, MissionId, MissionInstance, PlatformDescriptor,
    PlatformKind, BROADCAST, HUB,
};
use crate::protocol::{
    AlertPayload, ByePayload, DetectionPayload, ErrorPayload, EventPayload, Frame, FrameType, HelloPayload, TelemetryPayload,
    TriggerPayload, WelcomePayload,
};
use crate::world::WorldState;
pub use log::{EventLog, LogError};

pub type ConnId = u64;

pub const HEARTBEAT_TICKS: u64 = 600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub agent_id: AgentId,
    pub descriptor: PlatformDescriptor,
    pub connected_tick: u64,
    pub last_seq_in: u64,
    pub last_seq_out: u64,
    pub last_frame_tick: u64,
    #[serde(skip)]
    pub conn: ConnId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    Deliver { conn: ConnId, frame: Frame },
    Close { conn: ConnId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubConfig {
    pub seed: u64,
    pub tick_dt: f64,
    pub detection_threshold: f64,
    pub heartbeat_ticks: u64,
    pub scenario: String,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self { seed: 0, tick_dt: 0.1, detection_threshold: 0.6, heartbeat_ticks: HEARTBEAT_TICKS, scenario: String::new() }
    }
}

/// Read-only view taken at a tick boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub world: Option<WorldState>,
    pub agents: BTreeMap<AgentId, TwinAgent>,
    pub sessions: Vec<SessionRecord>,
    pub missions: BTreeMap<MissionId, MissionInstance>,
    pub corroborations: Vec<CorroborationRequest>,
    pub proposals: Vec<Proposal>,
    pub log_lines: u64,
}

impl Snapshot {
    pub fn empty() -> Self {
        Self {
            tick: 0,
            world: None,
            agents: BTreeMap::new(),
            sessions: Vec::new(),
            missions: BTreeMap::new(),
            corroborations: Vec::new(),
            proposals: Vec::new(),
            log_lines: 0,
        }
    }
}

pub struct TwinHub {
    config: HubConfig,
    engine: Engine,
    registry: Registry,
    sessions: BTreeMap<AgentId, SessionRecord>,
    by_conn: BTreeMap<ConnId, AgentId>,
    conn_ids: Arc<AtomicU64>,
    log: EventLog,
    seq: u64,
    next_event_id: u64,
    tick: u64,
    outbound: Vec<Outbound>,
}

impl TwinHub {
    pub fn new(config: HubConfig, engine: Engine, log: EventLog) -> Self {
        Self {
            config,
            engine,
            registry: Registry::new(),
            sessions: BTreeMap::new(),
            by_conn: BTreeMap::new(),
            conn_ids: Arc::new(AtomicU64::new(0)),
            log,
            seq: 0,
            next_event_id: 0,
            tick: 0,
            outbound: Vec::new(),
        }
    }

    /// Allocates a connection id. The counter is shareable with transports.
    pub fn connect(&self) -> ConnId {
        self.conn_ids.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn conn_ids(&self) -> Arc<AtomicU64> {
        Arc::clone(&self.conn_ids)
    }

    pub fn config(&self) -> &HubConfig {
        &self.config
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn sessions(&self) -> &BTreeMap<AgentId, SessionRecord> {
        &self.sessions
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn conn_of(&self, agent: &AgentId) -> Option<ConnId> {
        self.sessions.get(agent).map(|s| s.conn)
    }

    pub fn take_outbound(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.outbound)
    }

    /// Logs the run header.
    pub fn start(&mut self, scenario: Value) -> Result<(), LogError> {
        let data = json!({
            "seed": self.config.seed,
            "tick_dt": self.config.tick_dt,
            "detection_threshold": self.config.detection_threshold,
            "placement_distance": self.engine.config().placement_distance,
            "definitions": self.engine.definitions(),
            "scenario": scenario,
        });
        let payload = EventPayload::new("run_started", None, data);
        self.emit(&AgentId::new(BROADCAST), FrameType::Event, to_value(&payload))?;
        Ok(())
    }

    /// Sends BYE to every session and seals the log. Returns the digest.
    pub fn finish(&mut self) -> Result<String, LogError> {
        self.emit(&AgentId::new(BROADCAST), FrameType::Bye, to_value(&ByePayload { reason: "run_end".into() }))?;
        let conns: Vec<ConnId> = self.sessions.values().map(|s| s.conn).collect();
        self.outbound.extend(conns.into_iter().map(|conn| Outbound::Close { conn }));
        self.log.seal()
    }

    /// Heartbeat checks and periodic governance work.
    pub fn begin_tick(&mut self, tick: u64) -> Result<(), LogError> {
        self.tick = tick;
        let silent: Vec<AgentId> = self
            .sessions
            .values()
            .filter(|s| s.descriptor.kind != PlatformKind::Operator)
            .filter(|s| tick.saturating_sub(s.last_frame_tick) >= self.config.heartbeat_ticks)
            .map(|s| s.agent_id.clone())
            .collect();
        for agent in silent {
            let msg = format!("no frame for {} ticks", self.config.heartbeat_ticks);
            self.emit(&agent, FrameType::Error, to_value(&ErrorPayload::new("heartbeat timeout", msg)))?;
            self.close_session(&agent)?;
        }
        self.engine.on_tick(tick, &self.registry);
        self.flush_effects()
    }

    /// Handles one frame arriving on `conn`.
    pub fn receive(&mut self, conn: ConnId, frame: Frame) -> Result<(), LogError> {
        let Some(agent) = self.by_conn.get(&conn).cloned() else {
            if frame.frame_type == FrameType::Hello {
                return self.register(conn, frame);
            }
            let err = ErrorPayload::new("not registered", "first frame must be HELLO").about(frame.seq);
            self.emit_to_conn(conn, &frame.src, err)?;
            self.outbound.push(Outbound::Close { conn });
            return Ok(());
        };
        if frame.src != agent {
            let err = ErrorPayload::new("src mismatch", format!("session is '{agent}', frame claims '{}'", frame.src)).about(frame.seq);
            return self.emit(&agent, FrameType::Error, to_value(&err)).map(drop);
        }
        let session = &self.sessions[&agent];
        let expected = session.last_seq_in + 1;
        if frame.seq != expected {
            let err = ErrorPayload::new("sequence violation", format!("expected seq {expected}, got {}", frame.seq)).about(frame.seq);
            self.emit(&agent, FrameType::Error, to_value(&err))?;
            return self.close_session(&agent);
        }
        let tick = self.tick;
        let session = self.sessions.get_mut(&agent).expect("looked up above");
        session.last_seq_in = frame.seq;
        session.last_frame_tick = tick;
        self.log.append(&frame)?;
        self.route(&agent, frame)
    }

    /// A line on `conn` did not decode. The session stays open.
    pub fn malformed(&mut self, conn: ConnId, error: &str) -> Result<(), LogError> {
        let err = ErrorPayload::new("malformed frame", error);
        match self.by_conn.get(&conn).cloned() {
            Some(agent) => self.emit(&agent, FrameType::Error, to_value(&err)).map(drop),
            None => self.emit_to_conn(conn, &AgentId::new("unregistered"), err),
        }
    }

    /// The connection dropped without BYE.
    pub fn disconnect(&mut self, conn: ConnId) -> Result<(), LogError> {
        match self.by_conn.get(&conn).cloned() {
            Some(agent) => self.close_session(&agent),
            None => Ok(()),
        }
    }

    pub fn snapshot(&self, world: Option<&WorldState>) -> Snapshot {
        Snapshot {
            tick: self.tick,
            world: world.cloned(),
            agents: self.registry.clone(),
            sessions: self.sessions.values().cloned().collect(),
            missions: self.engine.missions().iter().map(|(id, m)| (id.clone(), m.instance.clone())).collect(),
            corroborations: self.engine.corroborations().unresolved().cloned().collect(),
            proposals: self.engine.proposals().values().filter(|p| p.status == ProposalStatus::Open).cloned().collect(),
            log_lines: self.log.len(),
        }
    }

    // ---- sessions ---------------------------------------------------------

    fn register(&mut self, conn: ConnId, frame: Frame) -> Result<(), LogError> {
        let hello: HelloPayload = match frame.payload_as() {
            Ok(h) => h,
            Err(e) => {
                let err = ErrorPayload::new("invalid descriptor", e.to_string()).about(frame.seq);
                self.emit_to_conn(conn, &frame.src, err)?;
                self.outbound.push(Outbound::Close { conn });
                return Ok(());
            }
        };
        let registered = self.sessions.keys().cloned().collect();
        let mut violations = match validate_platform(&hello.descriptor, &registered) {
            Ok(()) => Vec::new(),
            Err(v) => v,
        };
        if hello.descriptor.agent_id != frame.src {
            violations.push(crate::model::Violation::new(
                "agent id",
                format!("descriptor names '{}' but frame src is '{}'", hello.descriptor.agent_id, frame.src),
            ));
        }
        if frame.seq != 1 {
            violations.push(crate::model::Violation::new("sequence", "HELLO must carry seq 1"));
        }
        if !violations.is_empty() {
            let code = if violations.iter().any(|v| v.code == "duplicate id") { "duplicate id" } else { "invalid descriptor" };
            let msg = violations.iter().map(|v| v.code.as_str()).collect::<Vec<_>>().join(", ");
            let mut err = ErrorPayload::new(code, msg).about(frame.seq);
            err.violations = violations;
            self.emit_to_conn(conn, &frame.src, err)?;
            self.outbound.push(Outbound::Close { conn });
            return Ok(());
        }

        let agent = frame.src.clone();
        let tick = self.tick;
        self.log.append(&frame)?;
        self.sessions.insert(
            agent.clone(),
            SessionRecord {
                agent_id: agent.clone(),
                descriptor: hello.descriptor.clone(),
                connected_tick: tick,
                last_seq_in: frame.seq,
                last_seq_out: 0,
                last_frame_tick: tick,
                conn,
            },
        );
        self.by_conn.insert(conn, agent.clone());
        self.registry.insert(agent.clone(), TwinAgent::new(hello.descriptor));
        let welcome =
            WelcomePayload { agent_id: agent.clone(), tick_dt: self.config.tick_dt, detection_threshold: self.config.detection_threshold };
        self.emit(&agent, FrameType::Welcome, to_value(&welcome))?;
        Ok(())
    }

    fn close_session(&mut self, agent: &AgentId) -> Result<(), LogError> {
        let Some(session) = self.sessions.remove(agent) else { return Ok(()) };
        self.by_conn.remove(&session.conn);
        self.registry.remove(agent);
        self.outbound.push(Outbound::Close { conn: session.conn });
        self.engine.participant_lost(agent, self.tick, &self.registry);
        self.flush_effects()
    }

    // ---- routing ----------------------------------------------------------

    fn route(&mut self, src: &AgentId, frame: Frame) -> Result<(), LogError> {
        match frame.dst.as_str() {
            HUB => self.dispatch(src, frame),
            BROADCAST => {
                if frame.frame_type == FrameType::Command {
                    let err = ErrorPayload::new("invalid command", "commands must name one recipient").about(frame.seq);
                    return self.emit(src, FrameType::Error, to_value(&err)).map(drop);
                }
                let targets: Vec<AgentId> = self.sessions.keys().filter(|a| *a != src).cloned().collect();
                for t in targets {
                    self.deliver(&t, frame.clone());
                }
                Ok(())
            }
            _ => {
                let Some(session) = self.sessions.get(&frame.dst) else {
                    let err = ErrorPayload::new("unknown dst", format!("no session '{}'", frame.dst)).about(frame.seq);
                    return self.emit(src, FrameType::Error, to_value(&err)).map(drop);
                };
                if frame.frame_type == FrameType::Command {
                    let verb_ok = BehaviorCommand::from_payload(&frame.payload)
                        .map_err(|e| e.to_string())
                        .and_then(|(cmd, _)| cmd.verb().allowed_for(&session.descriptor));
                    if let Err(why) = verb_ok {
                        let err = ErrorPayload::new("invalid command", why).about(frame.seq);
                        return self.emit(src, FrameType::Error, to_value(&err)).map(drop);
                    }
                }
                let dst = frame.dst.clone();
                self.deliver(&dst, frame);
                Ok(())
            }
        }
    }

    fn dispatch(&mut self, src: &AgentId, frame: Frame) -> Result<(), LogError> {
        let tick = self.tick;
        let reject = |code: &str, msg: String| ErrorPayload::new(code, msg).about(frame.seq);
        let error = match frame.frame_type {
            FrameType::Telemetry => match frame.payload_as::<TelemetryPayload>() {
                Ok(t) => {
                    if let Some(twin) = self.registry.get_mut(src) {
                        twin.pose = Some(t.pose);
                        twin.battery = Some(t.battery);
                        twin.carrying = t.carrying;
                        twin.following = t.following;
                        twin.activity = t.activity;
                    }
                    None
                }
                Err(e) => Some(reject("invalid payload", e.to_string())),
            },
            FrameType::Alert => match frame.payload_as::<AlertPayload>() {
                Ok(a) => self.engine.on_alert(src, &a, tick, &self.registry).err().map(|e| reject("alert rejected", e.to_string())),
                Err(e) => Some(reject("invalid payload", e.to_string())),
            },
            FrameType::MissionTrigger => match frame.payload_as::<TriggerPayload>() {
                Ok(t) => self.engine.trigger(&t, src, tick, &self.registry).err().map(|e| reject(e.code(), e.to_string())),
                Err(e) => Some(reject("invalid payload", e.to_string())),
            },
            FrameType::Detection => match frame.payload_as::<DetectionPayload>() {
                Ok(d) => {
                    self.engine.on_detection(src, &d, tick, &self.registry);
                    None
                }
                Err(e) => Some(reject("invalid payload", e.to_string())),
            },
            FrameType::CorrVerdict => match frame.payload_as::<CorroborationVerdict>() {
                Ok(v) => self.engine.on_verdict(src, &v, tick, &self.registry).err().map(|e| reject("verdict rejected", e.to_string())),
                Err(e) => Some(reject("invalid payload", e.to_string())),
            },
            FrameType::Event => match frame.payload_as::<EventPayload>() {
                Ok(ev) => {
                    self.engine.on_event(src, &ev, tick, &self.registry);
                    None
                }
                Err(e) => Some(reject("invalid payload", e.to_string())),
            },
            FrameType::Bye => {
                self.close_session(src)?;
                None
            }
            FrameType::Error => None,
            other => Some(reject("unexpected frame", format!("{other} is not accepted by the hub"))),
        };
        if let Some(err) = error {
            self.emit(src, FrameType::Error, to_value(&err))?;
        }
        self.flush_effects()
    }

    fn flush_effects(&mut self) -> Result<(), LogError> {
        loop {
            let effects = self.engine.take_effects();
            if effects.is_empty() {
                return Ok(());
            }
            for effect in effects {
                match effect {
                    Effect::Send { dst, frame_type, payload } => {
                        self.emit(&dst, frame_type, payload)?;
                    }
                    Effect::C3 { kind, initiator, responder, mission, detail } => {
                        self.next_event_id += 1;
                        let event = C3Event {
                            event_id: self.next_event_id,
                            kind,
                            initiator,
                            responder,
                            mission,
                            tick: self.tick,
                            detail,
                            symbiosis: None,
                        };
                        self.log.append(&event)?;
                    }
                }
            }
        }
    }

    /// Stamps, logs and delivers a hub-originated frame.
    fn emit(&mut self, dst: &AgentId, frame_type: FrameType, payload: Value) -> Result<Frame, LogError> {
        self.seq += 1;
        let frame = Frame {
            v: crate::protocol::PROTOCOL_VERSION,
            frame_type,
            seq: self.seq,
            tick: self.tick,
            src: AgentId::new(HUB),
            dst: dst.clone(),
            payload,
        };
        self.log.append(&frame)?;
        if dst.as_str() == BROADCAST {
            let targets: Vec<AgentId> = self.sessions.keys().cloned().collect();
            for t in targets {
                self.deliver(&t, frame.clone());
            }
        } else {
            self.deliver(dst, frame.clone());
        }
        Ok(frame)
    }

    /// ERROR to a connection that has no session (yet).
    fn emit_to_conn(&mut self, conn: ConnId, claimed: &AgentId, err: ErrorPayload) -> Result<(), LogError> {
        self.seq += 1;
        let frame = Frame {
            v: crate::protocol::PROTOCOL_VERSION,
            frame_type: FrameType::Error,
            seq: self.seq,
            tick: self.tick,
            src: AgentId::new(HUB),
            dst: claimed.clone(),
            payload: to_value(&err),
        };
        self.log.append(&frame)?;
        self.outbound.push(Outbound::Deliver { conn, frame });
        Ok(())
    }

    fn deliver(&mut self, agent: &AgentId, frame: Frame) {
        if let Some(s) = self.sessions.get_mut(agent) {
            if frame.src.as_str() == HUB {
                s.last_seq_out = frame.seq;
            }
            self.outbound.push(Outbound::Deliver { conn: s.conn, frame });
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload types serialize")
}
