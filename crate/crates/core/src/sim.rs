//! The lockstep tick loop.
//!
//! Each tick: hub housekeeping, then every in-process controller in
//! ascending agent id order, then frames from remote connections, then one
//! world step. A delivered frame is read at the recipient's next turn, so
//! an agent later in id order sees it within the same tick.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::behaviors::{AgentOutput, Controller, MissionTimeline};
use crate::hub::net::{External, NetServer};
use crate::hub::{ConnId, LogError, Outbound, Snapshot, TwinHub};
use crate::model::{AgentId, MissionId, MissionState, MissionType};
use crate::protocol::Frame;
use crate::world::{WorldCommand, WorldState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("controller for unknown agent '{0}'")]
    UnknownAgent(AgentId),
    #[error("two controllers for agent '{0}'")]
    DuplicateController(AgentId),
}

struct Local {
    conn: ConnId,
    controller: Box<dyn Controller>,
    connected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionOutcome {
    pub mission_id: MissionId,
    pub mission_type: MissionType,
    pub state: MissionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub ticks: u64,
    pub log_lines: u64,
    pub digest: String,
    pub missions: Vec<MissionOutcome>,
}

impl RunOutcome {
    /// 0 when every triggered mission completed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.missions.iter().all(|m| m.state == MissionState::Completed) {
            0
        } else {
            1
        }
    }
}

pub struct Simulation {
    world: WorldState,
    hub: TwinHub,
    locals: Vec<Local>,
    pending: BTreeMap<ConnId, Vec<Frame>>,
    max_ticks: u64,
    header: Option<Value>,
    rejected_commands: u64,
}

impl Simulation {
    pub fn new(
        world: WorldState,
        hub: TwinHub,
        mut controllers: Vec<Box<dyn Controller>>,
        max_ticks: u64,
        header: Value,
    ) -> Result<Self, SimError> {
        controllers.sort_by(|a, b| a.agent_id().cmp(b.agent_id()));
        let mut ids = BTreeSet::new();
        for c in &controllers {
            if !world.agents.contains_key(c.agent_id()) && c.descriptor().kind != crate::model::PlatformKind::Operator {
                return Err(SimError::UnknownAgent(c.agent_id().clone()));
            }
            if !ids.insert(c.agent_id().clone()) {
                return Err(SimError::DuplicateController(c.agent_id().clone()));
            }
        }
        let locals = controllers.into_iter().map(|controller| Local { conn: hub.connect(), controller, connected: true }).collect();
        Ok(Self { world, hub, locals, pending: BTreeMap::new(), max_ticks, header: Some(header), rejected_commands: 0 })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn hub(&self) -> &TwinHub {
        &self.hub
    }

    pub fn max_ticks(&self) -> u64 {
        self.max_ticks
    }

    pub fn done(&self) -> bool {
        self.world.tick >= self.max_ticks
    }

    pub fn snapshot(&self) -> Snapshot {
        self.hub.snapshot(Some(&self.world))
    }

    /// World commands refused so far (blocked moves, out-of-reach grasps).
    pub fn rejected_commands(&self) -> u64 {
        self.rejected_commands
    }

    /// Mission timeline kept by the in-process operator, if any.
    pub fn operator_timeline(&self) -> Option<&MissionTimeline> {
        self.locals.iter().find_map(|l| l.controller.mission_timeline())
    }

    /// Runs one tick. Returns deliveries for connections that are not
    /// in-process agents.
    pub fn step(&mut self, external: Vec<(ConnId, External)>) -> Result<Vec<Outbound>, SimError> {
        if let Some(header) = self.header.take() {
            self.hub.start(header)?;
        }
        let tick = self.world.tick;
        self.hub.begin_tick(tick)?;
        let mut remote = self.collect();

        let mut commands: Vec<WorldCommand> = Vec::new();
        for i in 0..self.locals.len() {
            if !self.locals[i].connected {
                continue;
            }
            let conn = self.locals[i].conn;
            let inbox = self.pending.remove(&conn).unwrap_or_default();
            let mut out = AgentOutput::default();
            self.locals[i].controller.step(&self.world, &inbox, &mut out);
            for frame in out.frames {
                self.hub.receive(conn, frame)?;
            }
            remote.extend(self.collect());
            let me = self.locals[i].controller.agent_id();
            commands.extend(out.commands.into_iter().filter(|c| c.agent() == me));
        }

        for (conn, input) in external {
            match input {
                External::Frame(frame) => self.hub.receive(conn, frame)?,
                External::Malformed(error) => self.hub.malformed(conn, &error)?,
                External::Closed => self.hub.disconnect(conn)?,
            }
            remote.extend(self.collect());
        }

        let rejected = self.world.step_mut(&commands);
        for r in &rejected {
            tracing::trace!(tick, "world command {} rejected: {}", r.index, r.error);
        }
        self.rejected_commands += rejected.len() as u64;
        Ok(remote)
    }

    /// Routes hub output: in-process deliveries are queued for the
    /// recipient's next turn, everything else is returned.
    fn collect(&mut self) -> Vec<Outbound> {
        let mut remote = Vec::new();
        for out in self.hub.take_outbound() {
            let local = match &out {
                Outbound::Deliver { conn, .. } | Outbound::Close { conn } => self.locals.iter().position(|l| l.conn == *conn),
            };
            match (local, out) {
                (Some(_), Outbound::Deliver { conn, frame }) => self.pending.entry(conn).or_default().push(frame),
                (Some(i), Outbound::Close { conn }) => {
                    self.locals[i].connected = false;
                    self.pending.remove(&conn);
                }
                (None, out) => remote.push(out),
            }
        }
        remote
    }

    /// Ends the run: BYE to everyone, log sealed.
    pub fn finish(&mut self) -> Result<(RunOutcome, Vec<Outbound>), SimError> {
        if let Some(header) = self.header.take() {
            self.hub.start(header)?;
        }
        let digest = self.hub.finish()?;
        let remote = self.collect();
        let missions = self
            .hub
            .engine()
            .missions()
            .values()
            .map(|m| MissionOutcome {
                mission_id: m.instance.mission_id.clone(),
                mission_type: m.instance.mission_type,
                state: m.instance.state,
            })
            .collect();
        let outcome = RunOutcome { ticks: self.world.tick, log_lines: self.hub.log().len(), digest, missions };
        Ok((outcome, remote))
    }

    /// Headless deterministic run to `max_ticks`.
    pub fn run(mut self) -> Result<(RunOutcome, Self), SimError> {
        while !self.done() {
            self.step(Vec::new())?;
        }
        let (outcome, _) = self.finish()?;
        Ok((outcome, self))
    }

    /// Networked run: remote frames are drained once per tick and the
    /// snapshot is republished after every world step. `pace` of `None`
    /// runs as fast as possible.
    pub async fn run_networked(mut self, mut server: NetServer, pace: Option<Duration>) -> Result<(RunOutcome, Self), SimError> {
        let mut interval = pace.map(|p| {
            let mut i = tokio::time::interval(p);
            i.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            i
        });
        server.publish(&self.snapshot());
        while !self.done() {
            match interval.as_mut() {
                Some(i) => {
                    i.tick().await;
                }
                None => tokio::task::yield_now().await,
            }
            let input = server.drain();
            for out in self.step(input)? {
                server.dispatch(out);
            }
            server.publish(&self.snapshot());
        }
        let (outcome, remote) = self.finish()?;
        for out in remote {
            server.dispatch(out);
        }
        server.publish(&self.snapshot());
        // give socket writers a moment to flush BYE
        tokio::time::sleep(Duration::from_millis(50)).await;
        Ok((outcome, self))
    }
}
