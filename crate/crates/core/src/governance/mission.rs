//! Mission transition graphs and the instance state machine.
//!
//! Definitions are plain data so they can be shipped in a scenario file,
//! inspected, and replayed against logged histories.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, HistoryEntry, MissionId, MissionInstance, MissionProgress, MissionState, MissionType, PlatformKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionEvent {
    MotorsOn,
    Stood,
    ArmUnstowed,
    TraceStarted,
    TraceDone,
    Corroborated,
    CorroborationTimeout,
    CorroborationDenied,
    RouteStarted,
    WaypointReached,
    RouteComplete,
    AlertReceived,
    ApprovalRequested,
    HitlApproved,
    HitlDenied,
    BoxDetected,
    Arrived,
    GraspSuccess,
    GraspFail,
    RetriesExhausted,
    PartnerDetected,
    PartnerLost,
    Placed,
    SwapComplete,
    SearchTimeout,
    SwapTimeout,
    Fault,
    ParticipantLost,
}

impl MissionEvent {
    pub const ALL: [MissionEvent; 28] = [
        MissionEvent::MotorsOn,
        MissionEvent::Stood,
        MissionEvent::ArmUnstowed,
        MissionEvent::TraceStarted,
        MissionEvent::TraceDone,
        MissionEvent::Corroborated,
        MissionEvent::CorroborationTimeout,
        MissionEvent::CorroborationDenied,
        MissionEvent::RouteStarted,
        MissionEvent::WaypointReached,
        MissionEvent::RouteComplete,
        MissionEvent::AlertReceived,
        MissionEvent::ApprovalRequested,
        MissionEvent::HitlApproved,
        MissionEvent::HitlDenied,
        MissionEvent::BoxDetected,
        MissionEvent::Arrived,
        MissionEvent::GraspSuccess,
        MissionEvent::GraspFail,
        MissionEvent::RetriesExhausted,
        MissionEvent::PartnerDetected,
        MissionEvent::PartnerLost,
        MissionEvent::Placed,
        MissionEvent::SwapComplete,
        MissionEvent::SearchTimeout,
        MissionEvent::SwapTimeout,
        MissionEvent::Fault,
        MissionEvent::ParticipantLost,
    ];

    /// Wire name, as carried in EVENT frames.
    pub fn name(self) -> &'static str {
        match self {
            MissionEvent::MotorsOn => "motors_on",
            MissionEvent::Stood => "stood",
            MissionEvent::ArmUnstowed => "arm_unstowed",
            MissionEvent::TraceStarted => "trace_started",
            MissionEvent::TraceDone => "trace_done",
            MissionEvent::Corroborated => "corroborated",
            MissionEvent::CorroborationTimeout => "corroboration_timeout",
            MissionEvent::CorroborationDenied => "corroboration_denied",
            MissionEvent::RouteStarted => "route_started",
            MissionEvent::WaypointReached => "waypoint_reached",
            MissionEvent::RouteComplete => "route_complete",
            MissionEvent::AlertReceived => "alert_received",
            MissionEvent::ApprovalRequested => "approval_requested",
            MissionEvent::HitlApproved => "hitl_approved",
            MissionEvent::HitlDenied => "hitl_denied",
            MissionEvent::BoxDetected => "box_detected",
            MissionEvent::Arrived => "arrived",
            MissionEvent::GraspSuccess => "grasp_success",
            MissionEvent::GraspFail => "grasp_fail",
            MissionEvent::RetriesExhausted => "retries_exhausted",
            MissionEvent::PartnerDetected => "partner_detected",
            MissionEvent::PartnerLost => "partner_lost",
            MissionEvent::Placed => "placed",
            MissionEvent::SwapComplete => "swap_complete",
            MissionEvent::SearchTimeout => "search_timeout",
            MissionEvent::SwapTimeout => "swap_timeout",
            MissionEvent::Fault => "fault",
            MissionEvent::ParticipantLost => "participant_lost",
        }
    }

    pub fn from_name(name: &str) -> Option<MissionEvent> {
        MissionEvent::ALL.into_iter().find(|e| e.name() == name)
    }
}

impl fmt::Display for MissionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRule {
    pub from: MissionState,
    pub event: MissionEvent,
    pub to: MissionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTimeout {
    pub state: MissionState,
    pub ticks: u64,
    pub event: MissionEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roles {
    pub executor: PlatformKind,
    pub corroborators: Vec<PlatformKind>,
    pub beneficiary: Option<PlatformKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionDefinition {
    pub mission_type: MissionType,
    pub transitions: Vec<TransitionRule>,
    pub roles: Roles,
    #[serde(default)]
    pub timeouts: Vec<StateTimeout>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DefinitionError {
    #[error("{0:?}: duplicate transition for ({1}, {2})")]
    Nondeterministic(MissionType, MissionState, MissionEvent),
    #[error("{0:?}: transition out of terminal state {1}")]
    FromTerminal(MissionType, MissionState),
    #[error("{0:?}: state {1} cannot reach a terminal state")]
    Dead(MissionType, MissionState),
    #[error("{0:?}: no transition out of Triggered")]
    NoStart(MissionType),
    #[error("{0:?}: timeout on {1} uses event {2} which has no transition there")]
    BadTimeout(MissionType, MissionState, MissionEvent),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissionError {
    #[error("protocol violation: event {event} undefined in state {state}")]
    ProtocolViolation { state: MissionState, event: MissionEvent },
    #[error("mission already terminal in {0}")]
    AlreadyTerminal(MissionState),
    #[error("definition is for {expected:?}, instance is {actual:?}")]
    WrongDefinition { expected: MissionType, actual: MissionType },
}

/// Tunables that shape the default graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub search_timeout_ticks: u64,
    pub swap_timeout_ticks: u64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { search_timeout_ticks: 1200, swap_timeout_ticks: 900 }
    }
}

struct Builder {
    rules: Vec<TransitionRule>,
}

impl Builder {
    fn new() -> Self {
        Self { rules: Vec::new() }
    }

    fn on(mut self, from: MissionState, event: MissionEvent, to: MissionState) -> Self {
        self.rules.push(TransitionRule { from, event, to });
        self
    }

    /// Every non-terminal state aborts on a fault or a lost participant.
    fn with_faults(mut self) -> Vec<TransitionRule> {
        let states: BTreeSet<MissionState> = self.rules.iter().flat_map(|r| [r.from, r.to]).filter(|s| !s.is_terminal()).collect();
        for s in states {
            for e in [MissionEvent::Fault, MissionEvent::ParticipantLost] {
                if !self.rules.iter().any(|r| r.from == s && r.event == e) {
                    self.rules.push(TransitionRule { from: s, event: e, to: MissionState::Aborted });
                }
            }
        }
        self.rules
    }
}

impl MissionDefinition {
    pub fn default_for(mission_type: MissionType, params: &GraphParams) -> MissionDefinition {
        use MissionEvent as E;
        use MissionState as S;
        match mission_type {
            MissionType::M1 => MissionDefinition {
                mission_type,
                transitions: Builder::new()
                    .on(S::Triggered, E::MotorsOn, S::MotorsOn)
                    .on(S::MotorsOn, E::Stood, S::Standing)
                    .on(S::Standing, E::ArmUnstowed, S::ArmUnstowed)
                    .on(S::ArmUnstowed, E::TraceStarted, S::ConcurrentTrace)
                    .on(S::ConcurrentTrace, E::TraceDone, S::AwaitCorroboration)
                    .on(S::AwaitCorroboration, E::Corroborated, S::Completed)
                    .on(S::AwaitCorroboration, E::CorroborationTimeout, S::Unverified)
                    .on(S::AwaitCorroboration, E::CorroborationDenied, S::Aborted)
                    .with_faults(),
                roles: Roles {
                    executor: PlatformKind::Quadruped,
                    corroborators: vec![PlatformKind::Aerial, PlatformKind::Operator],
                    beneficiary: None,
                },
                timeouts: Vec::new(),
            },
            MissionType::M2 => MissionDefinition {
                mission_type,
                transitions: Builder::new()
                    .on(S::Triggered, E::RouteStarted, S::Waypoint)
                    .on(S::Waypoint, E::WaypointReached, S::Waypoint)
                    .on(S::Waypoint, E::RouteComplete, S::AwaitFinalCorroboration)
                    .on(S::Waypoint, E::CorroborationDenied, S::Aborted)
                    .on(S::AwaitFinalCorroboration, E::Corroborated, S::Completed)
                    .on(S::AwaitFinalCorroboration, E::CorroborationTimeout, S::Unverified)
                    .on(S::AwaitFinalCorroboration, E::CorroborationDenied, S::Aborted)
                    .with_faults(),
                roles: Roles {
                    executor: PlatformKind::Quadruped,
                    corroborators: vec![PlatformKind::FixedCamera, PlatformKind::Aerial, PlatformKind::Operator],
                    beneficiary: None,
                },
                timeouts: Vec::new(),
            },
            MissionType::M3 => MissionDefinition {
                mission_type,
                transitions: Builder::new()
                    .on(S::Triggered, E::AlertReceived, S::AlertReceived)
                    .on(S::AlertReceived, E::ApprovalRequested, S::AwaitHitlApproval)
                    .on(S::AwaitHitlApproval, E::HitlApproved, S::SearchBattery)
                    .on(S::AwaitHitlApproval, E::HitlDenied, S::Aborted)
                    .on(S::SearchBattery, E::BoxDetected, S::ApproachBox)
                    .on(S::SearchBattery, E::SearchTimeout, S::Aborted)
                    .on(S::ApproachBox, E::Arrived, S::Grasp)
                    .on(S::Grasp, E::GraspSuccess, S::SearchPartner)
                    .on(S::Grasp, E::GraspFail, S::Grasp)
                    .on(S::Grasp, E::RetriesExhausted, S::Aborted)
                    .on(S::SearchPartner, E::PartnerDetected, S::ApproachPartner)
                    .on(S::SearchPartner, E::SearchTimeout, S::Aborted)
                    .on(S::ApproachPartner, E::Arrived, S::Place)
                    .on(S::ApproachPartner, E::PartnerLost, S::SearchPartner)
                    .on(S::Place, E::Placed, S::SwapInProgress)
                    .on(S::SwapInProgress, E::SwapComplete, S::Completed)
                    .on(S::SwapInProgress, E::SwapTimeout, S::Aborted)
                    .with_faults(),
                roles: Roles {
                    executor: PlatformKind::Quadruped,
                    corroborators: vec![PlatformKind::Aerial, PlatformKind::FixedCamera, PlatformKind::Operator],
                    beneficiary: Some(PlatformKind::Wheeled),
                },
                timeouts: vec![
                    StateTimeout { state: S::SearchBattery, ticks: params.search_timeout_ticks, event: E::SearchTimeout },
                    StateTimeout { state: S::SearchPartner, ticks: params.search_timeout_ticks, event: E::SearchTimeout },
                    StateTimeout { state: S::SwapInProgress, ticks: params.swap_timeout_ticks, event: E::SwapTimeout },
                ],
            },
        }
    }

    pub fn defaults(params: &GraphParams) -> BTreeMap<MissionType, MissionDefinition> {
        MissionType::ALL.into_iter().map(|t| (t, MissionDefinition::default_for(t, params))).collect()
    }

    pub fn successor(&self, state: MissionState, event: MissionEvent) -> Option<MissionState> {
        self.transitions.iter().find(|r| r.from == state && r.event == event).map(|r| r.to)
    }

    pub fn states(&self) -> BTreeSet<MissionState> {
        self.transitions.iter().flat_map(|r| [r.from, r.to]).collect()
    }

    pub fn timeout_for(&self, state: MissionState) -> Option<&StateTimeout> {
        self.timeouts.iter().find(|t| t.state == state)
    }

    pub fn validate(&self) -> Result<(), DefinitionError> {
        let t = self.mission_type;
        let mut seen = BTreeSet::new();
        for r in &self.transitions {
            if !seen.insert((r.from, r.event)) {
                return Err(DefinitionError::Nondeterministic(t, r.from, r.event));
            }
            if r.from.is_terminal() {
                return Err(DefinitionError::FromTerminal(t, r.from));
            }
        }
        if !self.transitions.iter().any(|r| r.from == MissionState::Triggered) {
            return Err(DefinitionError::NoStart(t));
        }
        // reverse reachability from the terminal states
        let mut reaches: BTreeSet<MissionState> = self.states().into_iter().filter(|s| s.is_terminal()).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for r in &self.transitions {
                if reaches.contains(&r.to) && reaches.insert(r.from) {
                    changed = true;
                }
            }
        }
        for s in self.states() {
            if !reaches.contains(&s) {
                return Err(DefinitionError::Dead(t, s));
            }
        }
        for to in &self.timeouts {
            if self.successor(to.state, to.event).is_none() {
                return Err(DefinitionError::BadTimeout(t, to.state, to.event));
            }
        }
        Ok(())
    }

    /// Shortest event sequence from Triggered to `target`, if reachable.
    pub fn path_to(&self, target: MissionState) -> Option<Vec<MissionEvent>> {
        let mut queue = VecDeque::from([MissionState::Triggered]);
        let mut back: BTreeMap<MissionState, (MissionState, MissionEvent)> = BTreeMap::new();
        let mut seen = BTreeSet::from([MissionState::Triggered]);
        while let Some(s) = queue.pop_front() {
            if s == target {
                let mut events = Vec::new();
                let mut at = s;
                while let Some(&(p, e)) = back.get(&at) {
                    events.push(e);
                    at = p;
                }
                events.reverse();
                return Some(events);
            }
            for r in self.transitions.iter().filter(|r| r.from == s) {
                if seen.insert(r.to) {
                    back.insert(r.to, (s, r.event));
                    queue.push_back(r.to);
                }
            }
        }
        None
    }

    /// Checks that a recorded sequence of states is a walk in this graph.
    /// Moves into `Aborted` are always legal: undefined events abort.
    pub fn check_history(&self, states: &[MissionState]) -> Result<(), String> {
        let Some(first) = states.first() else {
            return Err("empty history".into());
        };
        if *first != MissionState::Triggered {
            return Err(format!("history starts in {first}, not Triggered"));
        }
        for w in states.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.is_terminal() {
                return Err(format!("transition {a} -> {b} after terminal state"));
            }
            let legal = b == MissionState::Aborted || self.transitions.iter().any(|r| r.from == a && r.to == b);
            if !legal {
                return Err(format!("{a} -> {b} is not an edge of the {:?} graph", self.mission_type));
            }
        }
        Ok(())
    }
}

/// Outcome of a successful [`MissionInstance::advance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: MissionState,
    /// The event after refinement (e.g. the third grasp failure becomes
    /// `retries_exhausted`).
    pub event: MissionEvent,
    pub to: MissionState,
}

impl MissionInstance {
    pub fn new(
        mission_id: MissionId,
        mission_type: MissionType,
        participants: Vec<AgentId>,
        progress: MissionProgress,
        tick: u64,
        cause: impl Into<String>,
    ) -> Self {
        Self {
            mission_id,
            mission_type,
            state: MissionState::Triggered,
            history: vec![HistoryEntry { tick, state: MissionState::Triggered, cause: cause.into() }],
            participants,
            progress,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }

    fn refine(&mut self, event: MissionEvent) -> MissionEvent {
        match (self.state, event) {
            (MissionState::Grasp, MissionEvent::GraspFail) => {
                self.progress.grasp_attempts += 1;
                if self.progress.grasp_attempts >= self.progress.grasp_retry_cap {
                    MissionEvent::RetriesExhausted
                } else {
                    event
                }
            }
            (MissionState::Waypoint, MissionEvent::WaypointReached) => {
                self.progress.waypoint_index += 1;
                if self.progress.waypoint_index >= self.progress.waypoint_count {
                    MissionEvent::RouteComplete
                } else {
                    event
                }
            }
            _ => event,
        }
    }

    /// Applies `event`. An event with no edge from the current state moves the
    /// instance to `Aborted` and reports a protocol violation.
    pub fn advance(
        &mut self,
        definition: &MissionDefinition,
        event: MissionEvent,
        tick: u64,
        cause: &str,
    ) -> Result<Transition, MissionError> {
        if definition.mission_type != self.mission_type {
            return Err(MissionError::WrongDefinition { expected: self.mission_type, actual: definition.mission_type });
        }
        if self.state.is_terminal() {
            return Err(MissionError::AlreadyTerminal(self.state));
        }
        let from = self.state;
        let event = self.refine(event);
        match definition.successor(from, event) {
            Some(to) => {
                self.state = to;
                let cause = if cause.is_empty() { event.name().to_owned() } else { format!("{}: {cause}", event.name()) };
                self.history.push(HistoryEntry { tick, state: to, cause });
                Ok(Transition { from, event, to })
            }
            None => {
                self.state = MissionState::Aborted;
                self.history.push(HistoryEntry {
                    tick,
                    state: MissionState::Aborted,
                    cause: format!("protocol_violation: {event} in {from}"),
                });
                Err(MissionError::ProtocolViolation { state: from, event })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(t: MissionType) -> MissionInstance {
        MissionInstance::new(
            MissionId::new("t-1"),
            t,
            vec![],
            MissionProgress { grasp_retry_cap: 3, waypoint_count: 3, ..Default::default() },
            0,
            "test",
        )
    }

    #[test]
    fn defaults_validate() {
        for d in MissionDefinition::defaults(&GraphParams::default()).values() {
            d.validate().unwrap();
        }
    }

    #[test]
    fn m3_grasp_success_goes_to_search_partner() {
        let d = MissionDefinition::default_for(MissionType::M3, &GraphParams::default());
        let mut m = instance(MissionType::M3);
        for e in d.path_to(MissionState::Grasp).unwrap() {
            m.advance(&d, e, 1, "").unwrap();
        }
        let t = m.advance(&d, MissionEvent::GraspSuccess, 2, "").unwrap();
        assert_eq!(t.to, MissionState::SearchPartner);
    }

    #[test]
    fn m3_third_grasp_fail_aborts() {
        let d = MissionDefinition::default_for(MissionType::M3, &GraphParams::default());
        let mut m = instance(MissionType::M3);
        for e in d.path_to(MissionState::Grasp).unwrap() {
            m.advance(&d, e, 1, "").unwrap();
        }
        assert_eq!(m.advance(&d, MissionEvent::GraspFail, 2, "").unwrap().to, MissionState::Grasp);
        assert_eq!(m.advance(&d, MissionEvent::GraspFail, 3, "").unwrap().to, MissionState::Grasp);
        let t = m.advance(&d, MissionEvent::GraspFail, 4, "").unwrap();
        assert_eq!(t.event, MissionEvent::RetriesExhausted);
        assert_eq!(t.to, MissionState::Aborted);
    }

    #[test]
    fn m1_timeout_is_unverified() {
        let d = MissionDefinition::default_for(MissionType::M1, &GraphParams::default());
        let mut m = instance(MissionType::M1);
        for e in d.path_to(MissionState::AwaitCorroboration).unwrap() {
            m.advance(&d, e, 1, "").unwrap();
        }
        m.advance(&d, MissionEvent::CorroborationTimeout, 9, "").unwrap();
        assert_eq!(m.state, MissionState::Unverified);
        assert_eq!(m.advance(&d, MissionEvent::Corroborated, 10, ""), Err(MissionError::AlreadyTerminal(MissionState::Unverified)));
    }

    #[test]
    fn undefined_event_aborts() {
        let d = MissionDefinition::default_for(MissionType::M1, &GraphParams::default());
        let mut m = instance(MissionType::M1);
        let err = m.advance(&d, MissionEvent::BoxDetected, 1, "").unwrap_err();
        assert!(matches!(err, MissionError::ProtocolViolation { .. }));
        assert_eq!(m.state, MissionState::Aborted);
        assert!(m.history.last().unwrap().cause.starts_with("protocol_violation"));
    }

    #[test]
    fn waypoints_refine_to_route_complete() {
        let d = MissionDefinition::default_for(MissionType::M2, &GraphParams::default());
        let mut m = instance(MissionType::M2);
        m.advance(&d, MissionEvent::RouteStarted, 1, "").unwrap();
        m.advance(&d, MissionEvent::WaypointReached, 2, "").unwrap();
        m.advance(&d, MissionEvent::WaypointReached, 3, "").unwrap();
        assert_eq!(m.state, MissionState::Waypoint);
        let t = m.advance(&d, MissionEvent::WaypointReached, 4, "").unwrap();
        assert_eq!(t.event, MissionEvent::RouteComplete);
        assert_eq!(m.state, MissionState::AwaitFinalCorroboration);
    }

    #[test]
    fn validation_catches_bad_graphs() {
        let mut d = MissionDefinition::default_for(MissionType::M1, &GraphParams::default());
        d.transitions.push(TransitionRule { from: MissionState::Triggered, event: MissionEvent::MotorsOn, to: MissionState::Aborted });
        assert!(matches!(d.validate(), Err(DefinitionError::Nondeterministic(..))));

        let mut d = MissionDefinition::default_for(MissionType::M1, &GraphParams::default());
        d.transitions.retain(|r| r.to != MissionState::Completed && r.to != MissionState::Aborted && r.to != MissionState::Unverified);
        assert!(matches!(d.validate(), Err(DefinitionError::Dead(..))));
    }

    #[test]
    fn history_check() {
        let d = MissionDefinition::default_for(MissionType::M1, &GraphParams::default());
        use MissionState::*;
        assert!(d.check_history(&[Triggered, MotorsOn, Standing, Aborted]).is_ok());
        assert!(d.check_history(&[Triggered, Standing]).is_err());
        assert!(d.check_history(&[MotorsOn]).is_err());
        assert!(d.check_history(&[Triggered, Aborted, Completed]).is_err());
    }

    #[test]
    fn event_names_roundtrip() {
        for e in MissionEvent::ALL {
            assert_eq!(MissionEvent::from_name(e.name()), Some(e));
            assert_eq!(serde_json::to_value(e).unwrap(), serde_json::json!(e.name()));
        }
    }
}
