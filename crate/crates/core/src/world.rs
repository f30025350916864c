//! Deterministic discrete-tick world model.
//!
//! The world is a pure function of its previous state and the commands applied
//! in a tick. All maps are ordered so iteration, and therefore every derived
//! log line, is reproducible.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, Point, Pose2D, Rect};
use crate::model::{AgentId, BatteryState, Detection, ObjectId, PlatformDescriptor, PlatformKind, TargetClass};

pub const DEFAULT_TICK_DT: f64 = 0.1;
pub const DEFAULT_GRASP_REACH: f64 = 0.8;
pub const DEFAULT_SWAP_RADIUS: f64 = 2.5;
pub const DEFAULT_AGENT_RADIUS: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBody {
    pub descriptor: PlatformDescriptor,
    pub pose: Pose2D,
    pub battery: BatteryState,
    pub carrying: Option<ObjectId>,
}

impl AgentBody {
    pub fn immobilized(&self) -> bool {
        self.battery.is_immobilized()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub class: TargetClass,
    pub pose: Pose2D,
    pub carried_by: Option<AgentId>,
    /// A battery box that has been installed into an agent.
    #[serde(default)]
    pub consumed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub grasp_reach: f64,
    pub swap_radius: f64,
    pub agent_radius: f64,
    /// Half-width of the uniform confidence jitter; 0 disables it.
    pub perception_jitter: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            grasp_reach: DEFAULT_GRASP_REACH,
            swap_radius: DEFAULT_SWAP_RADIUS,
            agent_radius: DEFAULT_AGENT_RADIUS,
            perception_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub tick_dt: f64,
    pub bounds: Rect,
    pub agents: BTreeMap<AgentId, AgentBody>,
    pub objects: BTreeMap<ObjectId, WorldObject>,
    pub obstacles: Vec<Rect>,
    pub rng_seed: u64,
    pub params: WorldParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum WorldCommand {
    /// Drive `max_speed * tick_dt` along the current heading.
    Forward {
        agent: AgentId,
    },
    /// Drive toward `target`, stopping `stop_within` metres short of it. The
    /// heading follows the direction of travel.
    MoveToward {
        agent: AgentId,
        target: Point,
        stop_within: f64,
    },
    Turn {
        agent: AgentId,
        delta: f64,
    },
    Face {
        agent: AgentId,
        heading: f64,
    },
    Grasp {
        agent: AgentId,
        class: TargetClass,
    },
    Release {
        agent: AgentId,
    },
    SwapBattery {
        agent: AgentId,
        object: ObjectId,
    },
}

impl WorldCommand {
    pub fn agent(&self) -> &AgentId {
        match self {
            WorldCommand::Forward { agent }
            | WorldCommand::MoveToward { agent, .. }
            | WorldCommand::Turn { agent, .. }
            | WorldCommand::Face { agent, .. }
            | WorldCommand::Grasp { agent, .. }
            | WorldCommand::Release { agent }
            | WorldCommand::SwapBattery { agent, .. } => agent,
        }
    }

    fn translates(&self) -> bool {
        matches!(self, WorldCommand::Forward { .. } | WorldCommand::MoveToward { .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown agent '{0}'")]
    UnknownAgent(AgentId),
    #[error("agent '{0}' is immobilized")]
    Immobilized(AgentId),
    #[error("agent '{0}' already moved this tick")]
    MotionBudget(AgentId),
    #[error("move would leave world bounds")]
    OutOfBounds,
    #[error("move blocked by an obstacle")]
    Blocked,
    #[error("agent '{0}' has no manipulator")]
    NoManipulator(AgentId),
    #[error("agent '{0}' is already carrying an object")]
    HandsFull(AgentId),
    #[error("no graspable object within reach (nearest at {nearest:?} m)")]
    OutOfReach { nearest: Option<f64> },
    #[error("agent '{0}' is not carrying anything")]
    NothingCarried(AgentId),
    #[error("object '{0}' cannot be used for a battery swap")]
    SwapUnavailable(ObjectId),
    #[error("non-finite command argument")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    /// Index into the command slice passed to `step`.
    pub index: usize,
    pub error: WorldError,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("unknown agent '{0}'")]
    UnknownAgent(AgentId),
    #[error("agent '{agent}' has no camera '{camera}'")]
    UnknownCamera { agent: AgentId, camera: String },
}

/// Geometry of one observation, before class filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sighting {
    pub range: f64,
    pub bearing: f64,
    pub confidence: f64,
}

impl WorldState {
    pub fn new(bounds: Rect, tick_dt: f64, rng_seed: u64) -> Self {
        Self {
            tick: 0,
            tick_dt,
            bounds,
            agents: BTreeMap::new(),
            objects: BTreeMap::new(),
            obstacles: Vec::new(),
            rng_seed,
            params: WorldParams::default(),
        }
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentBody> {
        self.agents.get(id)
    }

    /// Pure step: returns the successor state and the rejected commands.
    pub fn step(&self, commands: &[WorldCommand]) -> (WorldState, Vec<Rejection>) {
        let mut next = self.clone();
        let rejected = next.step_mut(commands);
        (next, rejected)
    }

    /// In-place variant of [`WorldState::step`].
    pub fn step_mut(&mut self, commands: &[WorldCommand]) -> Vec<Rejection> {
        let mut rejected = Vec::new();
        let mut moved: Vec<AgentId> = Vec::new();
        // immobilization is judged on the state at the start of the tick
        let immobile: BTreeMap<AgentId, bool> = self.agents.iter().map(|(id, a)| (id.clone(), a.immobilized())).collect();

        for (index, cmd) in commands.iter().enumerate() {
            let agent = cmd.agent();
            let Some(&is_immobile) = immobile.get(agent) else {
                rejected.push(Rejection { index, error: WorldError::UnknownAgent(agent.clone()) });
                continue;
            };
            if is_immobile && !matches!(cmd, WorldCommand::SwapBattery { .. }) {
                rejected.push(Rejection { index, error: WorldError::Immobilized(agent.clone()) });
                continue;
            }
            if cmd.translates() {
                if moved.contains(agent) {
                    rejected.push(Rejection { index, error: WorldError::MotionBudget(agent.clone()) });
                    continue;
                }
                moved.push(agent.clone());
            }
            if let Err(error) = self.apply(cmd) {
                rejected.push(Rejection { index, error });
            }
        }

        let dt = self.tick_dt;
        for body in self.agents.values_mut() {
            if !body.immobilized() && body.battery.drain_rate > 0.0 {
                body.battery.level = (body.battery.level - body.battery.drain_rate * dt).max(0.0);
            }
        }
        self.sync_carried();
        self.tick += 1;
        rejected
    }

    fn sync_carried(&mut self) {
        for obj in self.objects.values_mut() {
            if let Some(carrier) = &obj.carried_by {
                if let Some(body) = self.agents.get(carrier) {
                    obj.pose = body.pose;
                }
            }
        }
    }

    fn apply(&mut self, cmd: &WorldCommand) -> Result<(), WorldError> {
        match cmd {
            WorldCommand::Forward { agent } => {
                let body = &self.agents[agent];
                let dest = body.pose.ahead(body.descriptor.max_speed * self.tick_dt);
                self.translate(agent, dest, None)
            }
            WorldCommand::MoveToward { agent, target, stop_within } => {
                if !target.is_finite() || !stop_within.is_finite() {
                    return Err(WorldError::NonFinite);
                }
                let body = &self.agents[agent];
                let here = body.pose.position();
                let offset = *target - here;
                let dist = offset.norm();
                let to_go = (dist - stop_within.max(0.0)).max(0.0);
                let step = to_go.min(body.descriptor.max_speed * self.tick_dt);
                if step <= 0.0 {
                    return Ok(());
                }
                let heading = offset.angle();
                // land exactly on the target when it is within reach this tick
                let dest = if step == dist { *target } else { here + offset * (step / dist) };
                self.translate(agent, dest, Some(heading))
            }
            WorldCommand::Turn { agent, delta } => {
                if !delta.is_finite() {
                    return Err(WorldError::NonFinite);
                }
                let body = self.agents.get_mut(agent).expect("checked");
                body.pose = Pose2D::new(body.pose.x, body.pose.y, body.pose.heading + delta);
                Ok(())
            }
            WorldCommand::Face { agent, heading } => {
                if !heading.is_finite() {
                    return Err(WorldError::NonFinite);
                }
                let body = self.agents.get_mut(agent).expect("checked");
                body.pose = Pose2D::new(body.pose.x, body.pose.y, *heading);
                Ok(())
            }
            WorldCommand::Grasp { agent, class } => self.grasp(agent, *class),
            WorldCommand::Release { agent } => {
                let body = self.agents.get_mut(agent).expect("checked");
                let Some(obj_id) = body.carrying.take() else {
                    return Err(WorldError::NothingCarried(agent.clone()));
                };
                let pose = body.pose;
                let obj = self.objects.get_mut(&obj_id).expect("carried object exists");
                obj.carried_by = None;
                obj.pose = pose;
                Ok(())
            }
            WorldCommand::SwapBattery { agent, object } => {
                let body = &self.agents[agent];
                let usable = self.objects.get(object).is_some_and(|o| {
                    o.class == TargetClass::BatteryBox
                        && o.carried_by.is_none()
                        && !o.consumed
                        && o.pose.position().distance(body.pose.position()) <= self.params.swap_radius
                });
                if !usable || !body.descriptor.battery_capable {
                    return Err(WorldError::SwapUnavailable(object.clone()));
                }
                self.objects.get_mut(object).expect("checked").consumed = true;
                self.agents.get_mut(agent).expect("checked").battery.level = 1.0;
                Ok(())
            }
        }
    }

    fn translate(&mut self, agent: &AgentId, dest: Point, heading: Option<f64>) -> Result<(), WorldError> {
        if !self.bounds.contains(dest) {
            return Err(WorldError::OutOfBounds);
        }
        let body = &self.agents[agent];
        if body.descriptor.kind != PlatformKind::Aerial {
            let from = body.pose.position();
            if self.obstacles.iter().any(|r| r.intersects_segment(from, dest)) {
                return Err(WorldError::Blocked);
            }
        }
        let body = self.agents.get_mut(agent).expect("checked");
        body.pose = Pose2D::new(dest.x, dest.y, heading.unwrap_or(body.pose.heading));
        Ok(())
    }

    fn grasp(&mut self, agent: &AgentId, class: TargetClass) -> Result<(), WorldError> {
        let body = &self.agents[agent];
        if !body.descriptor.has_manipulator {
            return Err(WorldError::NoManipulator(agent.clone()));
        }
        if body.carrying.is_some() {
            return Err(WorldError::HandsFull(agent.clone()));
        }
        let here = body.pose.position();
        let nearest = self
            .objects
            .iter()
            .filter(|(_, o)| o.class == class && o.carried_by.is_none() && !o.consumed)
            .map(|(id, o)| (id.clone(), o.pose.position().distance(here)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((id, d)) if d <= self.params.grasp_reach => {
                self.agents.get_mut(agent).expect("checked").carrying = Some(id.clone());
                let pose = self.agents[agent].pose;
                let obj = self.objects.get_mut(&id).expect("exists");
                obj.carried_by = Some(agent.clone());
                obj.pose = pose;
                Ok(())
            }
            other => Err(WorldError::OutOfReach { nearest: other.map(|(_, d)| d) }),
        }
    }

    fn camera_of(&self, agent: &AgentId, camera: &str) -> Result<(&AgentBody, &crate::model::CameraSpec), PerceptionError> {
        let body = self.agents.get(agent).ok_or_else(|| PerceptionError::UnknownAgent(agent.clone()))?;
        let cam = body
            .descriptor
            .camera(camera)
            .ok_or_else(|| PerceptionError::UnknownCamera { agent: agent.clone(), camera: camera.to_owned() })?;
        Ok((body, cam))
    }

    /// Raw line-of-sight observation of a point, without jitter.
    fn observe(&self, body: &AgentBody, cam: &crate::model::CameraSpec, target: Point) -> Option<Sighting> {
        let here = body.pose.position();
        let rel = target - here;
        let range = rel.norm();
        if range > cam.max_range {
            return None;
        }
        let bearing = if range == 0.0 { 0.0 } else { normalize_angle(rel.angle() - body.pose.heading) };
        let off_axis = normalize_angle(bearing - cam.mount_bearing);
        if off_axis.abs() > cam.fov / 2.0 {
            return None;
        }
        let airborne = body.descriptor.kind == PlatformKind::Aerial;
        if !airborne && self.obstacles.iter().any(|r| r.intersects_segment(here, target)) {
            return None;
        }
        let confidence = (1.0 - range / cam.max_range).clamp(0.0, 1.0);
        Some(Sighting { range, bearing, confidence })
    }

    /// All perceivable targets in one camera's view.
    pub fn perceive(&self, agent: &AgentId, camera: &str) -> Result<Vec<Detection>, PerceptionError> {
        let (body, cam) = self.camera_of(agent, camera)?;
        let mut targets: Vec<(String, TargetClass, Point)> = Vec::new();
        for (id, obj) in &self.objects {
            if obj.carried_by.is_none() && !obj.consumed {
                targets.push((format!("o:{id}"), obj.class, obj.pose.position()));
            }
        }
        for (id, other) in &self.agents {
            if id != agent && other.descriptor.kind == PlatformKind::Wheeled {
                targets.push((format!("a:{id}"), TargetClass::WheeledPlatform, other.pose.position()));
            }
        }
        let mut out = Vec::new();
        for (key, class, pos) in targets {
            if let Some(s) = self.observe(body, cam, pos) {
                let confidence = self.jitter(s.confidence, agent, camera, &key);
                out.push(Detection {
                    target_class: class,
                    confidence,
                    range: s.range,
                    bearing: s.bearing,
                    camera_id: camera.to_owned(),
                    tick: self.tick,
                });
            }
        }
        Ok(out)
    }

    /// Whether `subject` is inside the camera's view cone and range with a
    /// clear sight line. Used for corroboration, where any agent kind counts.
    pub fn sees(&self, agent: &AgentId, camera: &str, subject: &AgentId) -> Result<Option<Sighting>, PerceptionError> {
        let (body, cam) = self.camera_of(agent, camera)?;
        let Some(target) = self.agents.get(subject) else {
            return Ok(None);
        };
        Ok(self.observe(body, cam, target.pose.position()))
    }

    fn jitter(&self, confidence: f64, agent: &AgentId, camera: &str, target: &str) -> f64 {
        let amp = self.params.perception_jitter;
        if amp <= 0.0 {
            return confidence;
        }
        // FNV-1a over the observation identity keeps noise reproducible per
        // (seed, tick, agent, camera, target) regardless of call order
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in agent.as_str().bytes().chain(camera.bytes()).chain(target.bytes()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed ^ h ^ self.tick.rotate_left(32));
        let noise: f64 = rng.random_range(-amp..=amp);
        (confidence + noise).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CameraSpec, QUADRUPED_CAMERAS};
    use std::f64::consts::PI;

    fn body(id: &str, kind: PlatformKind, pose: Pose2D, speed: f64) -> AgentBody {
        let cameras = match kind {
            PlatformKind::Quadruped => {
                QUADRUPED_CAMERAS.iter().zip([0.4, -0.4, PI / 2.0, -PI / 2.0, PI]).map(|(c, b)| CameraSpec::new(*c, b, 1.6, 10.0)).collect()
            }
            _ => vec![CameraSpec::new("front", 0.0, 1.2, 10.0)],
        };
        AgentBody {
            descriptor: PlatformDescriptor {
                agent_id: AgentId::new(id),
                kind,
                cameras,
                has_manipulator: kind == PlatformKind::Quadruped,
                battery_capable: kind == PlatformKind::Wheeled,
                max_speed: speed,
            },
            pose,
            battery: BatteryState::default(),
            carrying: None,
        }
    }

    fn world() -> WorldState {
        WorldState::new(Rect::new(Point::new(-20.0, -20.0), Point::new(20.0, 20.0)), 0.1, 7)
    }

    fn add(w: &mut WorldState, b: AgentBody) {
        w.agents.insert(b.descriptor.agent_id.clone(), b);
    }

    fn add_box(w: &mut WorldState, id: &str, x: f64, y: f64) {
        w.objects.insert(
            ObjectId::new(id),
            WorldObject { class: TargetClass::BatteryBox, pose: Pose2D::new(x, y, 0.0), carried_by: None, consumed: false },
        );
    }

    #[test]
    fn idle_step_only_advances_tick() {
        let mut w = world();
        add(&mut w, body("spot", PlatformKind::Quadruped, Pose2D::new(1.0, 2.0, 0.3), 1.0));
        let (next, rejected) = w.step(&[]);
        assert!(rejected.is_empty());
        assert_eq!(next.tick, 1);
        assert_eq!(next.agents, w.agents);
    }

    #[test]
    fn forward_moves_speed_times_dt() {
        let mut w = world();
        add(&mut w, body("spot", PlatformKind::Quadruped, Pose2D::new(0.0, 0.0, 0.0), 1.0));
        let (next, _) = w.step(&[WorldCommand::Forward { agent: "spot".into() }]);
        let p = next.agents[&AgentId::new("spot")].pose;
        assert!((p.x - 0.1).abs() < 1e-12 && p.y.abs() < 1e-12);
    }

    #[test]
    fn immobilized_agent_ignores_motion() {
        let mut w = world();
        let mut b = body("husky", PlatformKind::Wheeled, Pose2D::new(0.0, 0.0, 0.0), 1.0);
        b.battery = BatteryState { level: 0.04, drain_rate: 0.0, alert_threshold: 0.2, immobilize_threshold: 0.05 };
        add(&mut w, b);
        let (next, rejected) = w.step(&[WorldCommand::Forward { agent: "husky".into() }]);
        assert_eq!(next.agents[&AgentId::new("husky")].pose, Pose2D::new(0.0, 0.0, 0.0));
        assert_eq!(rejected[0].error, WorldError::Immobilized("husky".into()));
    }

    #[test]
    fn unknown_agent_rejected_world_advances() {
        let w = world();
        let (next, rejected) = w.step(&[WorldCommand::Forward { agent: "ghost".into() }]);
        assert_eq!(next.tick, 1);
        assert_eq!(rejected.len(), 1);
    }

    #[test]
    fn second_translation_in_tick_rejected() {
        let mut w = world();
        add(&mut w, body("spot", PlatformKind::Quadruped, Pose2D::new(0.0, 0.0, 0.0), 1.0));
        let id = AgentId::new("spot");
        let (next, rejected) = w.step(&[WorldCommand::Forward { agent: id.clone() }, WorldCommand::Forward { agent: id.clone() }]);
        assert_eq!(rejected.len(), 1);
        assert!((next.agents[&id].pose.x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn drain_and_immobilize() {
        let mut w = world();
        let mut b = body("husky", PlatformKind::Wheeled, Pose2D::new(0.0, 0.0, 0.0), 1.0);
        b.battery.level = 0.06;
        b.battery.drain_rate = 0.05;
        add(&mut w, b);
        let id = AgentId::new("husky");
        w.step_mut(&[]);
        assert!((w.agents[&id].battery.level - 0.055).abs() < 1e-12);
        w.step_mut(&[]);
        assert!(w.agents[&id].immobilized());
        let level = w.agents[&id].battery.level;
        w.step_mut(&[]);
        assert_eq!(w.agents[&id].battery.level, level);
    }

    #[test]
    fn move_toward_lands_on_target_and_respects_obstacles() {
        let mut w = world();
        add(&mut w, body("spot", PlatformKind::Quadruped, Pose2D::new(0.0, 0.0, 0.0), 1.0));
        let id = AgentId::new("spot");
        w.step_mut(&[WorldCommand::MoveToward { agent: id.clone(), target: Point::new(0.0, 0.05), stop_within: 0.0 }]);
        assert_eq!(w.agents[&id].pose.position(), Point::new(0.0, 0.05));
        assert!((w.agents[&id].pose.heading - PI / 2.0).abs() < 1e-12);

        w.obstacles.push(Rect::new(Point::new(0.02, -1.0), Point::new(1.0, 1.0)));
        let r = w.step_mut(&[WorldCommand::MoveToward { agent: id.clone(), target: Point::new(5.0, 0.05), stop_within: 0.0 }]);
        assert_eq!(r[0].error, WorldError::Blocked);
    }

    #[test]
    fn grasp_within_reach_and_carry() {
        let mut w = world();
        add(&mut w, body("spot", PlatformKind::Quadruped, Pose2D::new(0.0, 0.0, 0.0), 1.0));
        add_box(&mut w, "box-1", 0.7, 0.0);
        add_box(&mut w, "box-2", 5.0, 0.0);
        let id = AgentId::new("spot");
        assert!(w.step_mut(&[WorldCommand::Grasp { agent: id.clone(), class: TargetClass::BatteryBox }]).is_empty());
        assert_eq!(w.agents[&id].carrying, Some(ObjectId::new("box-1")));
        w.step_mut(&[WorldCommand::MoveToward { agent: id.clone(), target: Point::new(0.0, 3.0), stop_within: 0.0 }]);
        assert_eq!(w.objects[&ObjectId::new("box-1")].pose, w.agents[&id].pose);
        w.step_mut(&[WorldCommand::Release { agent: id.clone() }]);
        let o = &w.objects[&ObjectId::new("box-1")];
        assert!(o.carried_by.is_none());
        assert_eq!(o.pose.position(), w.agents[&id].pose.position());
    }

    #[test]
    fn grasp_out_of_reach_fails() {
        let mut w = world();
        add(&mut w, body("spot", PlatformKind::Quadruped, Pose2D::new(0.0, 0.0, 0.0), 1.0));
        add_box(&mut w, "box-1", 0.9, 0.0);
        let r = w.step_mut(&[WorldCommand::Grasp { agent: "spot".into(), class: TargetClass::BatteryBox }]);
        assert!(matches!(r[0].error, WorldError::OutOfReach { nearest: Some(d) } if (d - 0.9).abs() < 1e-12));
    }

    #[test]
    fn swap_restores_level_and_consumes_box() {
        let mut w = world();
        let mut b = body("husky", PlatformKind::Wheeled, Pose2D::new(0.0, 0.0, 0.0), 1.0);
        b.battery.level = 0.03;
        add(&mut w, b);
        add_box(&mut w, "box-1", 2.0, 0.0);
        let cmd = WorldCommand::SwapBattery { agent: "husky".into(), object: "box-1".into() };
        assert!(w.step_mut(std::slice::from_ref(&cmd)).is_empty());
        assert_eq!(w.agents[&AgentId::new("husky")].battery.level, 1.0);
        assert!(w.objects[&ObjectId::new("box-1")].consumed);
        assert_eq!(w.step_mut(&[cmd]).len(), 1);
    }

    #[test]
    fn perceive_behind_is_empty() {
        let mut w = world();
        add(&mut w, body("spot", PlatformKind::Quadruped, Pose2D::new(0.0, 0.0, 0.0), 1.0));
        add_box(&mut w, "box-1", -3.0, 0.0);
        let spot = AgentId::new("spot");
        assert!(w.perceive(&spot, "front_left").unwrap().is_empty());
        assert!(w.perceive(&spot, "front_right").unwrap().is_empty());
        assert_eq!(w.perceive(&spot, "back").unwrap().len(), 1);
    }

    #[test]
    fn perceive_confidence_on_axis() {
        let mut w = world();
        add(&mut w, body("cam", PlatformKind::FixedCamera, Pose2D::new(0.0, 0.0, 0.0), 0.0));
        add_box(&mut w, "box-1", 4.0, 0.0);
        let d = w.perceive(&AgentId::new("cam"), "front").unwrap();
        // independent evaluation: 1 - 4/10
        assert!((d[0].confidence - 0.6).abs() < 1e-12);
        assert!((d[0].range - 4.0).abs() < 1e-12);
        assert_eq!(d[0].bearing, 0.0);
    }

    #[test]
    fn perceive_beyond_range_is_empty() {
        let mut w = world();
        add(&mut w, body("cam", PlatformKind::FixedCamera, Pose2D::new(0.0, 0.0, 0.0), 0.0));
        add_box(&mut w, "box-1", 10.5, 0.0);
        assert!(w.perceive(&AgentId::new("cam"), "front").unwrap().is_empty());
    }

    #[test]
    fn perceive_occluded_and_unknown_camera() {
        let mut w = world();
        add(&mut w, body("cam", PlatformKind::FixedCamera, Pose2D::new(0.0, 0.0, 0.0), 0.0));
        add_box(&mut w, "box-1", 4.0, 0.0);
        w.obstacles.push(Rect::new(Point::new(1.0, -0.5), Point::new(2.0, 0.5)));
        let cam = AgentId::new("cam");
        assert!(w.perceive(&cam, "front").unwrap().is_empty());
        assert!(matches!(w.perceive(&cam, "nope"), Err(PerceptionError::UnknownCamera { .. })));
    }

    #[test]
    fn wheeled_agents_are_targets() {
        let mut w = world();
        add(&mut w, body("spot", PlatformKind::Quadruped, Pose2D::new(0.0, 0.0, 0.0), 1.0));
        add(&mut w, body("husky", PlatformKind::Wheeled, Pose2D::new(3.0, 0.5, 0.0), 1.0));
        let d = w.perceive(&AgentId::new("spot"), "front_left").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].target_class, TargetClass::WheeledPlatform);
    }

    #[test]
    fn jitter_is_bounded_and_reproducible() {
        let mut w = world();
        w.params.perception_jitter = 0.05;
        add(&mut w, body("cam", PlatformKind::FixedCamera, Pose2D::new(0.0, 0.0, 0.0), 0.0));
        add_box(&mut w, "box-1", 4.0, 0.0);
        let cam = AgentId::new("cam");
        let a = w.perceive(&cam, "front").unwrap();
        let b = w.perceive(&cam, "front").unwrap();
        assert_eq!(a, b);
        assert!((a[0].confidence - 0.6).abs() <= 0.05 + 1e-12);
    }
}
