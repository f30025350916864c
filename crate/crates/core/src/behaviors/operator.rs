use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgentOutput, BehaviorCommand, Controller, Handshake, Outbox};
use crate::model::{
    AgentId, CorroborationRequest, CorroborationVerdict, MissionId, MissionState, MissionType, PlatformDescriptor, Verdict, HUB,
};
use crate::protocol::{ErrorPayload, EventPayload, Frame, FrameType, StatusPayload, TriggerPayload};
use crate::world::WorldState;

/// Give up re-sending a rejected trigger after this many attempts.
const MAX_ATTEMPTS: u32 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTrigger {
    pub tick: u64,
    pub mission: MissionType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowOrder {
    pub aerial: AgentId,
    pub target: AgentId,
    #[serde(default = "default_follow_distance")]
    pub distance: f64,
    #[serde(default = "default_follow_tick")]
    pub tick: u64,
}

fn default_follow_distance() -> f64 {
    3.0
}

fn default_follow_tick() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictPolicy {
    #[default]
    Confirm,
    Deny,
    Ignore,
}

/// What the scripted human in the loop does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorScript {
    #[serde(default)]
    pub triggers: Vec<ScriptedTrigger>,
    #[serde(default)]
    pub follow: Option<FollowOrder>,
    #[serde(default = "yes")]
    pub approve_proposals: bool,
    #[serde(default = "default_approve_delay")]
    pub approve_delay: u64,
    #[serde(default)]
    pub verdict: VerdictPolicy,
    #[serde(default = "default_verdict_delay")]
    pub verdict_delay: u64,
    #[serde(default = "default_retry")]
    pub retry_ticks: u64,
}

fn yes() -> bool {
    true
}
fn default_approve_delay() -> u64 {
    10
}
fn default_verdict_delay() -> u64 {
    15
}
fn default_retry() -> u64 {
    50
}

impl Default for OperatorScript {
    fn default() -> Self {
        Self {
            triggers: Vec::new(),
            follow: None,
            approve_proposals: true,
            approve_delay: default_approve_delay(),
            verdict: VerdictPolicy::Confirm,
            verdict_delay: default_verdict_delay(),
            retry_ticks: default_retry(),
        }
    }
}

/// Per-mission state sequence as seen through MISSION_STATUS frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MissionTimeline {
    pub missions: BTreeMap<MissionId, Vec<(u64, MissionState)>>,
}

impl MissionTimeline {
    pub fn apply(&mut self, frame: &Frame) {
        if frame.frame_type != FrameType::MissionStatus {
            return;
        }
        if let Ok(s) = frame.payload_as::<StatusPayload>() {
            self.missions.entry(s.mission_id).or_default().push((frame.tick, s.state));
        }
    }

    pub fn latest(&self, mission: &MissionId) -> Option<MissionState> {
        self.missions.get(mission).and_then(|v| v.last()).map(|(_, s)| *s)
    }
}

#[derive(Debug, Clone)]
enum Action {
    Trigger { payload: TriggerPayload, attempt: u32 },
    Verdict { request_id: u64, verdict: Verdict },
    Follow(FollowOrder),
}

/// Scripted stand-in for the human operator.
pub struct Operator {
    desc: PlatformDescriptor,
    script: OperatorScript,
    outbox: Outbox,
    handshake: Handshake,
    agenda: Vec<(u64, Action)>,
    in_flight: BTreeMap<u64, (TriggerPayload, u32)>,
    timeline: MissionTimeline,
}

impl Operator {
    pub fn new(desc: PlatformDescriptor, script: OperatorScript) -> Self {
        let mut agenda: Vec<(u64, Action)> =
            script.triggers.iter().map(|t| (t.tick, Action::Trigger { payload: TriggerPayload::of(t.mission), attempt: 0 })).collect();
        if let Some(f) = &script.follow {
            agenda.push((f.tick, Action::Follow(f.clone())));
        }
        Self {
            outbox: Outbox::new(desc.agent_id.clone()),
            desc,
            script,
            handshake: Handshake::default(),
            agenda,
            in_flight: BTreeMap::new(),
            timeline: MissionTimeline::default(),
        }
    }

    pub fn timeline(&self) -> &MissionTimeline {
        &self.timeline
    }

    fn take_inbox(&mut self, tick: u64, inbox: &[Frame]) {
        for f in inbox {
            match f.frame_type {
                FrameType::MissionStatus => self.timeline.apply(f),
                FrameType::Event => {
                    let Ok(ev) = f.payload_as::<EventPayload>() else { continue };
                    if ev.name != "collaboration_proposal" || !self.script.approve_proposals {
                        continue;
                    }
                    if ev.data["feasible"].as_bool() != Some(true) {
                        continue;
                    }
                    let payload = TriggerPayload {
                        mission_type: MissionType::M3,
                        executor: None,
                        beneficiary: serde_json::from_value(ev.data["beneficiary"].clone()).ok(),
                        proposal_id: ev.data["proposal_id"].as_u64(),
                    };
                    self.agenda.push((tick + self.script.approve_delay, Action::Trigger { payload, attempt: 0 }));
                }
                FrameType::CorrRequest => {
                    let Ok(req) = f.payload_as::<CorroborationRequest>() else { continue };
                    if !req.corroborators.contains(&self.desc.agent_id) {
                        continue;
                    }
                    let verdict = match self.script.verdict {
                        VerdictPolicy::Confirm => Verdict::Confirmed,
                        VerdictPolicy::Deny => Verdict::Denied,
                        VerdictPolicy::Ignore => continue,
                    };
                    let due = (tick + self.script.verdict_delay).min(req.deadline_tick);
                    self.agenda.push((due, Action::Verdict { request_id: req.request_id, verdict }));
                }
                FrameType::Error => {
                    let Ok(err) = f.payload_as::<ErrorPayload>() else { continue };
                    let Some((payload, attempt)) = err.ref_seq.and_then(|s| self.in_flight.remove(&s)) else {
                        continue;
                    };
                    if err.code == "trigger rejected" && attempt + 1 < MAX_ATTEMPTS {
                        self.agenda.push((tick + self.script.retry_ticks, Action::Trigger { payload, attempt: attempt + 1 }));
                    }
                }
                FrameType::MissionTrigger | FrameType::Welcome => {}
                _ => {}
            }
        }
    }
}

impl Controller for Operator {
    fn agent_id(&self) -> &AgentId {
        &self.desc.agent_id
    }

    fn descriptor(&self) -> &PlatformDescriptor {
        &self.desc
    }

    fn mission_timeline(&self) -> Option<&MissionTimeline> {
        Some(&self.timeline)
    }

    fn step(&mut self, world: &WorldState, inbox: &[Frame], out: &mut AgentOutput) {
        let tick = world.tick;
        if !self.handshake.drive(&mut self.outbox, &self.desc, tick, inbox, out) {
            return;
        }
        self.take_inbox(tick, inbox);

        // stable order: due tick, then insertion order
        let mut due = Vec::new();
        let mut later = Vec::new();
        for (at, action) in std::mem::take(&mut self.agenda) {
            if at <= tick {
                due.push((at, action));
            } else {
                later.push((at, action));
            }
        }
        self.agenda = later;
        due.sort_by_key(|(at, _)| *at);

        for (_, action) in due {
            match action {
                Action::Trigger { payload, attempt } => {
                    let seq = self.outbox.send(out, tick, FrameType::MissionTrigger, HUB, &payload);
                    self.in_flight.insert(seq, (payload, attempt));
                }
                Action::Verdict { request_id, verdict } => {
                    let v = CorroborationVerdict { request_id, verifier: self.desc.agent_id.clone(), verdict, tick };
                    self.outbox.send(out, tick, FrameType::CorrVerdict, HUB, &v);
                }
                Action::Follow(order) => {
                    let cmd = BehaviorCommand::Follow { target: order.target.clone(), distance: order.distance };
                    self.outbox.send(out, tick, FrameType::Command, order.aerial.clone(), &cmd.to_payload(None));
                }
            }
        }
    }
}
