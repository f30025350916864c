//! The governance engine: mission lifecycle, corroboration, collaboration
//! proposals and C³ event classification.
//!
//! The engine never touches sockets or the log. Every reaction is queued as
//! an [`Effect`] which the hub turns into frames and log lines.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::corroboration::{CorroborationBook, CorroborationError, Resolution};
use super::mission::{GraphParams, MissionDefinition, MissionError, MissionEvent};
use crate::behaviors::{BehaviorCommand, GotoArgs, ScanArgs, SearchPattern, TraceArgs};
use crate::geometry::{Point, Pose2D};
use crate::model::{
    classify_interaction, AgentId, C3Kind, CorroborationVerdict, InteractionPattern, MissionId, MissionInstance, MissionProgress,
    MissionState, MissionType, PlatformDescriptor, PlatformKind, TargetClass, BROADCAST,
};
use crate::protocol::{AlertPayload, DetectionPayload, EventPayload, FrameType, StatusPayload, TriggerPayload};

/// What the hub knows about a registered agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinAgent {
    pub descriptor: PlatformDescriptor,
    pub pose: Option<Pose2D>,
    pub battery: Option<f64>,
    pub carrying: Option<String>,
    pub following: Option<AgentId>,
    pub activity: Option<String>,
}

impl TwinAgent {
    pub fn new(descriptor: PlatformDescriptor) -> Self {
        Self { descriptor, pose: None, battery: None, carrying: None, following: None, activity: None }
    }

    pub fn kind(&self) -> PlatformKind {
        self.descriptor.kind
    }
}

pub type Registry = BTreeMap<AgentId, TwinAgent>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Fixed camera expected to see this checkpoint; nearest one if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GovConfig {
    pub detection_threshold: f64,
    pub corroboration_deadline_ticks: u64,
    pub grasp_retry_cap: u32,
    pub auto_approve: bool,
    pub enabled: BTreeSet<MissionType>,
    pub placement_distance: f64,
    pub approach_standoff: f64,
    pub trace: TraceArgs,
    pub waypoints: Vec<Waypoint>,
    pub search_pattern: SearchPattern,
    pub graph: GraphParams,
}

impl Default for GovConfig {
    fn default() -> Self {
        Self {
            detection_threshold: 0.60,
            corroboration_deadline_ticks: 300,
            grasp_retry_cap: 3,
            auto_approve: false,
            enabled: MissionType::ALL.into_iter().collect(),
            placement_distance: 2.0,
            approach_standoff: 0.5,
            trace: TraceArgs { radius: 1.0, samples: 36, side: 1.0, arm_center: Point::new(0.0, 1.2) },
            waypoints: Vec::new(),
            search_pattern: SearchPattern::RotateInPlace,
            graph: GraphParams::default(),
        }
    }
}

/// A reaction the hub must carry out.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Send { dst: AgentId, frame_type: FrameType, payload: Value },
    C3 { kind: C3Kind, initiator: AgentId, responder: AgentId, mission: Option<MissionId>, detail: Value },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionRecord {
    pub instance: MissionInstance,
    pub executor: AgentId,
    pub corroborators: Vec<AgentId>,
    pub beneficiary: Option<AgentId>,
    pub entered_tick: u64,
    pub requests: Vec<u64>,
    pub target: Option<Point>,
    pub place: Option<Point>,
}

impl MissionRecord {
    pub fn is_active(&self) -> bool {
        !self.instance.is_terminal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Open,
    Approved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub proposal_id: u64,
    pub beneficiary: AgentId,
    pub executor: Option<AgentId>,
    pub feasible: bool,
    pub reason: String,
    pub status: ProposalStatus,
    pub alert_tick: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriggerError {
    #[error("mission {0} is disabled")]
    Disabled(MissionType),
    #[error("missing participant: {0}")]
    MissingParticipant(String),
    #[error("executor '{0}' is busy")]
    ExecutorBusy(AgentId),
    #[error("'{0}' cannot execute {1}")]
    Unsuitable(AgentId, MissionType),
    #[error("no waypoints configured")]
    NoWaypoints,
    #[error("proposal {0} is stale or unknown")]
    StaleProposal(u64),
    #[error("{0} already running for beneficiary '{1}'")]
    Duplicate(MissionType, AgentId),
}

impl TriggerError {
    /// Wire error code.
    pub fn code(&self) -> &'static str {
        match self {
            TriggerError::StaleProposal(_) => "stale proposal",
            _ => "trigger rejected",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerdictError {
    #[error("verdict signed by '{verifier}' but sent by '{sender}'")]
    Spoofed { verifier: AgentId, sender: AgentId },
    #[error(transparent)]
    Book(#[from] CorroborationError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlertError {
    #[error("'{0}' is not a registered battery-capable agent")]
    NotBatteryCapable(AgentId),
}

pub struct Engine {
    config: GovConfig,
    definitions: BTreeMap<MissionType, MissionDefinition>,
    missions: BTreeMap<MissionId, MissionRecord>,
    book: CorroborationBook,
    proposals: BTreeMap<u64, Proposal>,
    next_mission: u64,
    next_proposal: u64,
    cooperation_seen: BTreeSet<(MissionId, AgentId)>,
    effects: Vec<Effect>,
}

impl Engine {
    pub fn new(config: GovConfig, definitions: BTreeMap<MissionType, MissionDefinition>) -> Self {
        Self {
            config,
            definitions,
            missions: BTreeMap::new(),
            book: CorroborationBook::default(),
            proposals: BTreeMap::new(),
            next_mission: 0,
            next_proposal: 0,
            cooperation_seen: BTreeSet::new(),
            effects: Vec::new(),
        }
    }

    pub fn with_defaults(config: GovConfig) -> Self {
        let defs = MissionDefinition::defaults(&config.graph);
        Self::new(config, defs)
    }

    pub fn config(&self) -> &GovConfig {
        &self.config
    }

    pub fn definitions(&self) -> &BTreeMap<MissionType, MissionDefinition> {
        &self.definitions
    }

    pub fn missions(&self) -> &BTreeMap<MissionId, MissionRecord> {
        &self.missions
    }

    pub fn corroborations(&self) -> &CorroborationBook {
        &self.book
    }

    pub fn proposals(&self) -> &BTreeMap<u64, Proposal> {
        &self.proposals
    }

    pub fn take_effects(&mut self) -> Vec<Effect> {
        std::mem::take(&mut self.effects)
    }

    fn send(&mut self, dst: &AgentId, frame_type: FrameType, payload: Value) {
        self.effects.push(Effect::Send { dst: dst.clone(), frame_type, payload });
    }

    fn command(&mut self, dst: &AgentId, cmd: BehaviorCommand, mission: &MissionId) {
        let payload = cmd.to_payload(Some(mission));
        self.send(dst, FrameType::Command, payload);
    }

    fn c3(
        &mut self,
        pattern: InteractionPattern,
        initiator: &TwinAgentRef,
        responder: &TwinAgentRef,
        mission: Option<&MissionId>,
        mut detail: Value,
    ) {
        let kind = classify_interaction(initiator.kind, responder.kind, pattern);
        detail["pattern"] = serde_json::to_value(pattern).expect("pattern serializes");
        self.effects.push(Effect::C3 {
            kind,
            initiator: initiator.id.clone(),
            responder: responder.id.clone(),
            mission: mission.cloned(),
            detail,
        });
    }

    fn busy(&self, agent: &AgentId) -> bool {
        self.missions.values().any(|m| m.is_active() && &m.executor == agent)
    }

    fn active_for_executor(&self, agent: &AgentId) -> Option<MissionId> {
        self.missions.iter().find(|(_, m)| m.is_active() && &m.executor == agent).map(|(id, _)| id.clone())
    }

    fn active_for_beneficiary(&self, agent: &AgentId) -> Option<MissionId> {
        self.missions.iter().find(|(_, m)| m.is_active() && m.beneficiary.as_ref() == Some(agent)).map(|(id, _)| id.clone())
    }

    fn status(&mut self, id: &MissionId, event: Option<MissionEvent>) {
        let rec = &self.missions[id];
        let last = rec.instance.history.last().expect("history is never empty");
        let payload = StatusPayload {
            mission_id: id.clone(),
            mission_type: rec.instance.mission_type,
            state: rec.instance.state,
            event: event.map(|e| e.name().to_owned()),
            cause: last.cause.clone(),
            participants: rec.instance.participants.clone(),
        };
        let payload = serde_json::to_value(payload).expect("status serializes");
        self.send(&AgentId::new(BROADCAST), FrameType::MissionStatus, payload);
    }

    // ---- triggering -------------------------------------------------------

    fn pick_executor(&self, req: &TriggerPayload, reg: &Registry) -> Result<AgentId, TriggerError> {
        let needs_arm = req.mission_type == MissionType::M3;
        let suitable = |d: &PlatformDescriptor| d.kind == PlatformKind::Quadruped && (!needs_arm || d.can_fetch_battery());
        if let Some(id) = &req.executor {
            let twin = reg.get(id).ok_or_else(|| TriggerError::MissingParticipant(format!("executor '{id}'")))?;
            if !suitable(&twin.descriptor) {
                return Err(TriggerError::Unsuitable(id.clone(), req.mission_type));
            }
            if self.busy(id) {
                return Err(TriggerError::ExecutorBusy(id.clone()));
            }
            return Ok(id.clone());
        }
        let candidates: Vec<&AgentId> = reg.iter().filter(|(_, t)| suitable(&t.descriptor)).map(|(id, _)| id).collect();
        let Some(first) = candidates.first() else {
            let what = if needs_arm { "quadruped with manipulator" } else { "quadruped" };
            return Err(TriggerError::MissingParticipant(what.into()));
        };
        candidates.iter().find(|id| !self.busy(id)).map(|id| (*id).clone()).ok_or_else(|| TriggerError::ExecutorBusy((*first).clone()))
    }

    fn of_kind(reg: &Registry, kinds: &[PlatformKind]) -> Vec<AgentId> {
        reg.iter().filter(|(_, t)| kinds.contains(&t.kind())).map(|(id, _)| id.clone()).collect()
    }

    /// Creates a mission instance. `by` is the agent that asked for it, or
    /// `"hub"` for an automatic approval.
    pub fn trigger(&mut self, req: &TriggerPayload, by: &AgentId, tick: u64, reg: &Registry) -> Result<MissionId, TriggerError> {
        let mt = req.mission_type;
        if !self.config.enabled.contains(&mt) {
            return Err(TriggerError::Disabled(mt));
        }
        let proposal = match req.proposal_id {
            Some(pid) => match self.proposals.get(&pid) {
                Some(p) if p.status == ProposalStatus::Open && p.feasible => Some(p.clone()),
                _ => return Err(TriggerError::StaleProposal(pid)),
            },
            None => None,
        };
        let beneficiary = if mt == MissionType::M3 {
            let b = req
                .beneficiary
                .clone()
                .or_else(|| proposal.as_ref().map(|p| p.beneficiary.clone()))
                .or_else(|| reg.iter().find(|(_, t)| t.descriptor.battery_capable).map(|(id, _)| id.clone()))
                .ok_or_else(|| TriggerError::MissingParticipant("wheeled beneficiary".into()))?;
            if !reg.get(&b).is_some_and(|t| t.descriptor.battery_capable) {
                return Err(TriggerError::MissingParticipant(format!("battery-capable beneficiary '{b}'")));
            }
            if self.active_for_beneficiary(&b).is_some() {
                return Err(TriggerError::Duplicate(mt, b));
            }
            Some(b)
        } else {
            None
        };
        let executor = self.pick_executor(req, reg)?;
        let corroborators = match mt {
            MissionType::M1 => Self::of_kind(reg, &[PlatformKind::Aerial, PlatformKind::Operator]),
            MissionType::M2 => Self::of_kind(reg, &[PlatformKind::FixedCamera, PlatformKind::Aerial]),
            MissionType::M3 => Vec::new(),
        };
        if mt != MissionType::M3 && corroborators.is_empty() {
            return Err(TriggerError::MissingParticipant("corroborator".into()));
        }
        if mt == MissionType::M2 && self.config.waypoints.is_empty() {
            return Err(TriggerError::NoWaypoints);
        }

        self.next_mission += 1;
        let id = MissionId::new(format!("{mt}-{}", self.next_mission));
        let mut participants = vec![executor.clone()];
        participants.extend(corroborators.iter().cloned());
        participants.extend(beneficiary.iter().cloned());
        let progress = MissionProgress {
            grasp_attempts: 0,
            grasp_retry_cap: self.config.grasp_retry_cap,
            waypoint_index: 0,
            waypoint_count: if mt == MissionType::M2 { self.config.waypoints.len() } else { 0 },
        };
        let cause = match &proposal {
            Some(p) => format!("approved proposal {} by {by}", p.proposal_id),
            None => format!("triggered by {by}"),
        };
        let instance = MissionInstance::new(id.clone(), mt, participants, progress, tick, cause);
        self.missions.insert(
            id.clone(),
            MissionRecord {
                instance,
                executor: executor.clone(),
                corroborators,
                beneficiary,
                entered_tick: tick,
                requests: Vec::new(),
                target: None,
                place: None,
            },
        );
        self.status(&id, None);

        match mt {
            MissionType::M1 => self.command(&executor, BehaviorCommand::Stand, &id),
            MissionType::M2 => {
                self.advance(&id, MissionEvent::RouteStarted, tick, "route dispatched", reg);
                self.goto_waypoint(&id, 0);
            }
            MissionType::M3 => {
                if let Some(pid) = req.proposal_id {
                    self.proposals.get_mut(&pid).expect("checked above").status = ProposalStatus::Approved;
                }
                // an approval also settles any other open proposal for the same beneficiary
                let b = self.missions[&id].beneficiary.clone();
                for p in self.proposals.values_mut() {
                    if p.status == ProposalStatus::Open && Some(&p.beneficiary) == b.as_ref() {
                        p.status = ProposalStatus::Approved;
                    }
                }
                let approver = TwinAgentRef::of(by, reg, PlatformKind::Operator);
                let exec = TwinAgentRef::of(&executor, reg, PlatformKind::Quadruped);
                self.c3(
                    InteractionPattern::IndependentVerification,
                    &approver,
                    &exec,
                    Some(&id),
                    json!({ "approval": "hitl", "beneficiary": b, "proposal_id": req.proposal_id }),
                );
                self.advance(&id, MissionEvent::AlertReceived, tick, "battery alert", reg);
                self.advance(&id, MissionEvent::ApprovalRequested, tick, "", reg);
                self.advance(&id, MissionEvent::HitlApproved, tick, &format!("approved by {by}"), reg);
            }
        }
        Ok(id)
    }

    // ---- transitions ------------------------------------------------------

    /// Applies an event to a mission and runs the entry actions of the new
    /// state. Protocol violations abort the mission.
    pub fn advance(&mut self, id: &MissionId, event: MissionEvent, tick: u64, cause: &str, reg: &Registry) {
        let Some(rec) = self.missions.get_mut(id) else { return };
        let def = &self.definitions[&rec.instance.mission_type];
        match rec.instance.advance(def, event, tick, cause) {
            Ok(t) => {
                rec.entered_tick = tick;
                self.status(id, Some(t.event));
                self.on_enter(id, t.to, tick, reg);
            }
            Err(MissionError::ProtocolViolation { .. }) => {
                rec.entered_tick = tick;
                self.status(id, Some(event));
                self.on_enter(id, MissionState::Aborted, tick, reg);
            }
            Err(_) => {}
        }
    }

    fn on_enter(&mut self, id: &MissionId, state: MissionState, tick: u64, reg: &Registry) {
        let rec = self.missions[id].clone();
        let exec = &rec.executor;
        match state {
            MissionState::Standing => self.command(exec, BehaviorCommand::Unstow, id),
            MissionState::ArmUnstowed => {
                let trace = self.config.trace.clone();
                self.command(exec, BehaviorCommand::Trace(trace), id);
            }
            MissionState::AwaitCorroboration => {
                let corr = rec.corroborators.clone();
                if let Err(e) = self.raise_request(id, "m1_trace", corr, tick, reg) {
                    self.advance(id, MissionEvent::CorroborationTimeout, tick, &e.to_string(), reg);
                }
            }
            MissionState::AwaitFinalCorroboration => self.check_final(id, tick, reg),
            MissionState::SearchBattery => {
                let scan = ScanArgs { target: TargetClass::BatteryBox, partner: None, pattern: self.config.search_pattern };
                self.command(exec, BehaviorCommand::Scan(scan), id);
            }
            MissionState::ApproachBox => {
                let target = rec.target.expect("set with the detection");
                let goto = GotoArgs {
                    x: target.x,
                    y: target.y,
                    stop_within: self.config.approach_standoff,
                    report: "arrived".into(),
                    index: None,
                    watch: None,
                };
                self.command(exec, BehaviorCommand::Goto(goto), id);
            }
            MissionState::Grasp => self.command(exec, BehaviorCommand::Grasp { class: TargetClass::BatteryBox }, id),
            MissionState::SearchPartner => {
                let scan = ScanArgs {
                    target: TargetClass::WheeledPlatform,
                    partner: rec.beneficiary.clone(),
                    pattern: self.config.search_pattern,
                };
                self.command(exec, BehaviorCommand::Scan(scan), id);
            }
            MissionState::ApproachPartner => {
                let partner = rec.beneficiary.clone().expect("M3 has a beneficiary");
                let Some(pose) = reg.get(&partner).and_then(|t| t.pose) else {
                    self.advance(id, MissionEvent::Fault, tick, "partner pose unknown", reg);
                    return;
                };
                let place = placement_point(pose, self.config.placement_distance);
                self.missions.get_mut(id).expect("exists").place = Some(place);
                let goto =
                    GotoArgs { x: place.x, y: place.y, stop_within: 0.0, report: "arrived".into(), index: None, watch: Some(partner) };
                self.command(exec, BehaviorCommand::Goto(goto), id);
            }
            MissionState::Place => self.command(exec, BehaviorCommand::Release { beneficiary: rec.beneficiary.clone() }, id),
            s if s.is_terminal() && reg.contains_key(exec) => {
                self.command(exec, BehaviorCommand::Hold, id);
            }
            _ => {}
        }
    }

    fn goto_waypoint(&mut self, id: &MissionId, index: usize) {
        let Some(wp) = self.config.waypoints.get(index).cloned() else { return };
        let exec = self.missions[id].executor.clone();
        let goto = GotoArgs { x: wp.x, y: wp.y, stop_within: 0.0, report: "waypoint_reached".into(), index: Some(index), watch: None };
        self.command(&exec, BehaviorCommand::Goto(goto), id);
    }

    fn raise_request(
        &mut self,
        id: &MissionId,
        subject: &str,
        corroborators: Vec<AgentId>,
        tick: u64,
        reg: &Registry,
    ) -> Result<(), CorroborationError> {
        let registered: BTreeSet<AgentId> = reg.keys().cloned().collect();
        let corroborators: Vec<AgentId> = corroborators.into_iter().filter(|c| registered.contains(c)).collect();
        let exec = self.missions[id].executor.clone();
        let deadline = self.config.corroboration_deadline_ticks;
        let req = self.book.request(id, subject, &exec, corroborators, &registered, tick, deadline)?;
        self.missions.get_mut(id).expect("exists").requests.push(req.request_id);
        let payload = serde_json::to_value(&req).expect("request serializes");
        for c in &req.corroborators {
            self.send(c, FrameType::CorrRequest, payload.clone());
        }
        Ok(())
    }

    fn checkpoint_corroborators(&self, wp: &Waypoint, reg: &Registry) -> Vec<AgentId> {
        let camera = wp.camera.clone().or_else(|| {
            let here = Point::new(wp.x, wp.y);
            reg.iter()
                .filter(|(_, t)| t.kind() == PlatformKind::FixedCamera)
                .filter_map(|(id, t)| t.pose.map(|p| (id.clone(), p.position().distance(here))))
                .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
                .map(|(id, _)| id)
        });
        let mut out: Vec<AgentId> = camera.into_iter().collect();
        out.extend(Self::of_kind(reg, &[PlatformKind::Aerial]));
        out
    }

    /// Settles the final M2 state once every checkpoint request is resolved.
    fn check_final(&mut self, id: &MissionId, tick: u64, reg: &Registry) {
        let rec = &self.missions[id];
        if rec.instance.state != MissionState::AwaitFinalCorroboration {
            return;
        }
        let mut expired = 0;
        for rid in &rec.requests {
            match self.book.get(*rid).and_then(|r| r.resolution.clone()) {
                None => return,
                Some(Resolution::Expired) => expired += 1,
                Some(_) => {}
            }
        }
        if expired > 0 {
            self.advance(id, MissionEvent::CorroborationTimeout, tick, &format!("{expired} checkpoint(s) unverified"), reg);
        } else {
            self.advance(id, MissionEvent::Corroborated, tick, "all checkpoints corroborated", reg);
        }
    }

    fn resolved(&mut self, request_id: u64, resolution: Resolution, tick: u64, reg: &Registry) {
        let Some(open) = self.book.get(request_id) else { return };
        let id = open.request.mission_id.clone();
        let Some(rec) = self.missions.get(&id) else { return };
        if !rec.is_active() {
            return;
        }
        match (rec.instance.mission_type, resolution) {
            (MissionType::M1, Resolution::Confirmed) => self.advance(&id, MissionEvent::Corroborated, tick, "", reg),
            (_, Resolution::Denied { by }) => {
                let cause = if reg.get(&by).is_some_and(|t| t.kind() == PlatformKind::Operator) {
                    "operator_denied".to_owned()
                } else {
                    format!("denied by {by}")
                };
                self.advance(&id, MissionEvent::CorroborationDenied, tick, &cause, reg);
            }
            (MissionType::M1, Resolution::Expired) => self.advance(&id, MissionEvent::CorroborationTimeout, tick, "deadline passed", reg),
            (MissionType::M2, _) => self.check_final(&id, tick, reg),
            _ => {}
        }
    }

    // ---- inputs -----------------------------------------------------------

    pub fn on_event(&mut self, src: &AgentId, ev: &EventPayload, tick: u64, reg: &Registry) {
        if let Some(id) = self.active_for_executor(src) {
            if ev.mission.as_ref().is_some_and(|m| m != &id) {
                return;
            }
            let event = match ev.name.as_str() {
                "immobilized" => Some(MissionEvent::Fault),
                name => MissionEvent::from_name(name),
            };
            let Some(event) = event else { return };
            let cause = ev.data.get("reason").and_then(Value::as_str).unwrap_or("").to_owned();
            match event {
                MissionEvent::WaypointReached => {
                    self.advance(&id, event, tick, &cause, reg);
                    let rec = &self.missions[&id];
                    let reached = rec.instance.progress.waypoint_index.saturating_sub(1);
                    let state = rec.instance.state;
                    if matches!(state, MissionState::Waypoint | MissionState::AwaitFinalCorroboration) {
                        if let Some(wp) = self.config.waypoints.get(reached).cloned() {
                            let corr = self.checkpoint_corroborators(&wp, reg);
                            let subject = format!("checkpoint {reached}");
                            if let Err(e) = self.raise_request(&id, &subject, corr, tick, reg) {
                                tracing::debug!(mission = %id, "checkpoint request not raised: {e}");
                            }
                        }
                        if state == MissionState::Waypoint {
                            self.goto_waypoint(&id, reached + 1);
                        } else {
                            self.check_final(&id, tick, reg);
                        }
                    }
                }
                MissionEvent::Placed => {
                    let rec = self.missions[&id].clone();
                    self.advance(&id, event, tick, &cause, reg);
                    if self.missions[&id].instance.state == MissionState::SwapInProgress {
                        let b = rec.beneficiary.clone().expect("M3 has a beneficiary");
                        let helper = TwinAgentRef::of(src, reg, PlatformKind::Quadruped);
                        let helped = TwinAgentRef::of(&b, reg, PlatformKind::Wheeled);
                        let detail = json!({
                            "placed": { "x": ev.data["x"], "y": ev.data["y"] },
                            "expected": rec.place,
                            "object": ev.data["object"],
                        });
                        self.c3(InteractionPattern::AssistanceOnFault, &helper, &helped, Some(&id), detail);
                    }
                }
                _ => self.advance(&id, event, tick, &cause, reg),
            }
            return;
        }
        if let Some(id) = self.active_for_beneficiary(src) {
            if ev.name == "swap_complete" {
                self.advance(&id, MissionEvent::SwapComplete, tick, "", reg);
            }
        }
    }

    pub fn on_detection(&mut self, src: &AgentId, det: &DetectionPayload, tick: u64, reg: &Registry) {
        let Some(id) = self.active_for_executor(src) else { return };
        let rec = &self.missions[&id];
        let d = &det.detection;
        if !d.qualifies(self.config.detection_threshold) {
            return;
        }
        let cause = format!("{:?} confidence {:.3} via {}", d.target_class, d.confidence, d.camera_id);
        match (rec.instance.state, d.target_class) {
            (MissionState::SearchBattery, TargetClass::BatteryBox) => {
                let dir = Point::from_angle(det.observer.heading + d.bearing);
                let target = det.observer.position() + dir * d.range;
                self.missions.get_mut(&id).expect("exists").target = Some(target);
                self.advance(&id, MissionEvent::BoxDetected, tick, &cause, reg);
            }
            (MissionState::SearchPartner, TargetClass::WheeledPlatform) if (det.subject.is_none() || det.subject == rec.beneficiary) => {
                self.advance(&id, MissionEvent::PartnerDetected, tick, &cause, reg);
            }
            _ => {}
        }
    }

    pub fn on_verdict(&mut self, src: &AgentId, v: &CorroborationVerdict, tick: u64, reg: &Registry) -> Result<(), VerdictError> {
        if &v.verifier != src {
            return Err(VerdictError::Spoofed { verifier: v.verifier.clone(), sender: src.clone() });
        }
        let resolution = self.book.verdict(v, tick)?;
        let open = self.book.get(v.request_id).expect("just recorded").request.clone();
        let verifier = TwinAgentRef::of(src, reg, PlatformKind::Operator);
        let subject = TwinAgentRef::of(&open.subject_agent, reg, PlatformKind::Quadruped);
        let detail = json!({ "request_id": open.request_id, "subject": open.subject, "verdict": v.verdict });
        self.c3(InteractionPattern::IndependentVerification, &verifier, &subject, Some(&open.mission_id), detail);
        if let Some(r) = resolution {
            self.resolved(v.request_id, r, tick, reg);
        }
        Ok(())
    }

    pub fn on_alert(&mut self, src: &AgentId, alert: &AlertPayload, tick: u64, reg: &Registry) -> Result<(), AlertError> {
        let Some(twin) = reg.get(src).filter(|t| t.descriptor.battery_capable) else {
            return Err(AlertError::NotBatteryCapable(src.clone()));
        };
        let _ = twin;
        let duplicate = self.active_for_beneficiary(src).is_some()
            || self.proposals.values().any(|p| p.status == ProposalStatus::Open && &p.beneficiary == src);
        if duplicate {
            return Ok(());
        }
        let helper = reg.iter().find(|(_, t)| t.descriptor.can_fetch_battery()).map(|(id, _)| id.clone());
        let (feasible, reason) = if !self.config.enabled.contains(&MissionType::M3) {
            (false, "battery mission disabled".to_owned())
        } else if helper.is_none() {
            (false, "no manipulator-capable agent available".to_owned())
        } else {
            (true, String::new())
        };
        self.next_proposal += 1;
        let proposal = Proposal {
            proposal_id: self.next_proposal,
            beneficiary: src.clone(),
            executor: helper,
            feasible,
            reason,
            status: ProposalStatus::Open,
            alert_tick: tick,
        };
        let data = json!({
            "proposal_id": proposal.proposal_id,
            "mission_type": MissionType::M3,
            "beneficiary": proposal.beneficiary,
            "executor": proposal.executor,
            "feasible": proposal.feasible,
            "reason": proposal.reason,
            "level": alert.level,
        });
        let payload = EventPayload::new("collaboration_proposal", None, data);
        self.send(&AgentId::new(BROADCAST), FrameType::Event, serde_json::to_value(payload).expect("event serializes"));
        let pid = proposal.proposal_id;
        self.proposals.insert(pid, proposal);
        if feasible && self.config.auto_approve {
            self.auto_approve(pid, tick, reg);
        }
        Ok(())
    }

    fn auto_approve(&mut self, pid: u64, tick: u64, reg: &Registry) {
        let p = &self.proposals[&pid];
        let req = TriggerPayload {
            mission_type: MissionType::M3,
            executor: None,
            beneficiary: Some(p.beneficiary.clone()),
            proposal_id: Some(pid),
        };
        if let Err(e) = self.trigger(&req, &AgentId::new(crate::model::HUB), tick, reg) {
            tracing::debug!(proposal = pid, "auto-approval deferred: {e}");
        }
    }

    /// Periodic work at the start of a tick: corroboration deadlines, state
    /// timeouts, deferred approvals and cooperation detection.
    pub fn on_tick(&mut self, tick: u64, reg: &Registry) {
        for req in self.book.expire(tick) {
            self.resolved(req.request_id, Resolution::Expired, tick, reg);
        }

        let due: Vec<(MissionId, MissionEvent, u64)> = self
            .missions
            .iter()
            .filter(|(_, m)| m.is_active())
            .filter_map(|(id, m)| {
                let def = &self.definitions[&m.instance.mission_type];
                def.timeout_for(m.instance.state).filter(|t| tick >= m.entered_tick + t.ticks).map(|t| (id.clone(), t.event, t.ticks))
            })
            .collect();
        for (id, event, ticks) in due {
            self.advance(&id, event, tick, &format!("no progress for {ticks} ticks"), reg);
        }

        if self.config.auto_approve {
            let open: Vec<u64> =
                self.proposals.values().filter(|p| p.status == ProposalStatus::Open && p.feasible).map(|p| p.proposal_id).collect();
            for pid in open {
                self.auto_approve(pid, tick, reg);
            }
        }

        let mut joint = Vec::new();
        for (id, m) in self.missions.iter().filter(|(_, m)| m.is_active()) {
            for (aid, twin) in reg.iter().filter(|(_, t)| t.kind() == PlatformKind::Aerial) {
                if twin.following.as_ref() == Some(&m.executor) && !self.cooperation_seen.contains(&(id.clone(), aid.clone())) {
                    joint.push((id.clone(), aid.clone(), m.executor.clone()));
                }
            }
        }
        for (id, aerial, exec) in joint {
            self.cooperation_seen.insert((id.clone(), aerial.clone()));
            let a = TwinAgentRef::of(&aerial, reg, PlatformKind::Aerial);
            let e = TwinAgentRef::of(&exec, reg, PlatformKind::Quadruped);
            self.c3(InteractionPattern::JointTaskStep, &a, &e, Some(&id), json!({ "activity": "follow" }));
        }
    }

    /// A participant's session ended: its missions abort.
    pub fn participant_lost(&mut self, agent: &AgentId, tick: u64, reg: &Registry) {
        let hit: Vec<MissionId> = self
            .missions
            .iter()
            .filter(|(_, m)| m.is_active() && m.instance.participants.contains(agent))
            .map(|(id, _)| id.clone())
            .collect();
        for id in hit {
            self.advance(&id, MissionEvent::ParticipantLost, tick, &format!("participant lost: {agent}"), reg);
        }
    }
}

/// Point `distance` metres ahead of a pose.
pub fn placement_point(pose: Pose2D, distance: f64) -> Point {
    pose.position() + Point::from_angle(pose.heading) * distance
}

/// Identity plus kind of a C³ party; the hub pseudo-agent falls back to a
/// caller-chosen kind.
struct TwinAgentRef {
    id: AgentId,
    kind: PlatformKind,
}

impl TwinAgentRef {
    fn of(id: &AgentId, reg: &Registry, fallback: PlatformKind) -> Self {
        Self { id: id.clone(), kind: reg.get(id).map_or(fallback, |t| t.kind()) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_examples() {
        let p = placement_point(Pose2D::new(5.0, 5.0, 0.0), 2.0);
        assert!((p.x - 7.0).abs() < 1e-12 && (p.y - 5.0).abs() < 1e-12);
        let p = placement_point(Pose2D::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), 2.0);
        assert!(p.x.abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12);
    }
}
