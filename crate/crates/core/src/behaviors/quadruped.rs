use serde_json::json;

use super::{AgentOutput, BehaviorCommand, Controller, GotoArgs, Handshake, Outbox, ScanArgs, SearchPattern, TraceArgs, TELEMETRY_EVERY};
use crate::geometry::{trace_circle, trace_square, Point, Pose2D};
use crate::model::{AgentId, Detection, MissionId, ObjectId, PlatformDescriptor, TargetClass, HUB};
use crate::planner::plan_path;
use crate::protocol::{DetectionPayload, Frame, FrameType, TelemetryPayload};
use crate::world::{AgentBody, WorldCommand, WorldState};

/// Ticks the stand and unstow routines take.
const POSTURE_TICKS: u64 = 10;
/// Ticks between scan steps.
const SCAN_PERIOD: u64 = 5;
const SCAN_TURN: f64 = std::f64::consts::FRAC_PI_4;
const LAWNMOWER_LEG: f64 = 3.0;
/// Consecutive ticks without sight of a watched partner before giving up.
const LOST_TICKS: u32 = 20;
/// Consecutive ticks without progress before reporting a fault.
const STALL_TICKS: u32 = 20;
const ARRIVE_EPS: f64 = 1e-6;

#[derive(Debug)]
enum Task {
    Idle,
    Posture { until: u64, event: &'static str },
    Trace(TraceRun),
    Goto(GotoRun),
    Scan(ScanRun),
    GraspCheck,
    ReleaseCheck { object: ObjectId, beneficiary: Option<AgentId> },
}

impl Task {
    fn name(&self) -> &'static str {
        match self {
            Task::Idle => "idle",
            Task::Posture { .. } => "posture",
            Task::Trace(_) => "trace",
            Task::Goto(_) => "goto",
            Task::Scan(_) => "scan",
            Task::GraspCheck => "grasp",
            Task::ReleaseCheck { .. } => "release",
        }
    }
}

#[derive(Debug)]
struct TraceRun {
    args: TraceArgs,
    samples: Vec<Point>,
    next_sample: usize,
    corners: Vec<Point>,
    next_corner: usize,
    max_radial: f64,
    max_corner: f64,
    stall: Stall,
}

#[derive(Debug)]
struct GotoRun {
    args: GotoArgs,
    path: Vec<Point>,
    idx: usize,
    lost: u32,
    stall: Stall,
}

#[derive(Debug)]
struct ScanRun {
    args: ScanArgs,
    next_at: u64,
    rotations: u32,
    leg: Option<Point>,
}

#[derive(Debug, Default)]
struct Stall {
    last: Option<Point>,
    ticks: u32,
}

impl Stall {
    /// Returns true once the position has not changed for `STALL_TICKS`.
    fn update(&mut self, pos: Point) -> bool {
        if self.last == Some(pos) {
            self.ticks += 1;
        } else {
            self.ticks = 0;
            self.last = Some(pos);
        }
        self.ticks >= STALL_TICKS
    }
}

/// Five-camera legged platform with an arm.
pub struct Quadruped {
    desc: PlatformDescriptor,
    outbox: Outbox,
    handshake: Handshake,
    task: Task,
    mission: Option<MissionId>,
    arm_pending: Vec<Point>,
}

impl Quadruped {
    pub fn new(desc: PlatformDescriptor) -> Self {
        Self {
            outbox: Outbox::new(desc.agent_id.clone()),
            desc,
            handshake: Handshake::default(),
            task: Task::Idle,
            mission: None,
            arm_pending: Vec::new(),
        }
    }

    fn event(&mut self, out: &mut AgentOutput, tick: u64, name: &str, data: serde_json::Value) {
        let mission = self.mission.clone();
        self.outbox.event(out, tick, name, mission.as_ref(), data);
    }

    fn start(&mut self, cmd: BehaviorCommand, world: &WorldState, body: &AgentBody, out: &mut AgentOutput) {
        let tick = world.tick;
        self.task = match cmd {
            BehaviorCommand::Stand => {
                self.event(out, tick, "motors_on", json!({}));
                Task::Posture { until: tick + POSTURE_TICKS, event: "stood" }
            }
            BehaviorCommand::Unstow => Task::Posture { until: tick + POSTURE_TICKS, event: "arm_unstowed" },
            BehaviorCommand::Trace(args) => {
                let planned = trace_circle(args.arm_center, args.radius, args.samples)
                    .and_then(|s| trace_square(body.pose, args.side).map(|c| (s, c)));
                match planned {
                    Ok((samples, corners)) => {
                        self.event(out, tick, "trace_started", json!({ "origin": body.pose }));
                        Task::Trace(TraceRun {
                            args,
                            samples,
                            next_sample: 0,
                            corners,
                            next_corner: 0,
                            max_radial: 0.0,
                            max_corner: 0.0,
                            stall: Stall::default(),
                        })
                    }
                    Err(e) => {
                        self.event(out, tick, "fault", json!({ "reason": e.to_string() }));
                        Task::Idle
                    }
                }
            }
            BehaviorCommand::Goto(args) => match plan_path(world, body.pose, Point::new(args.x, args.y)) {
                Ok(path) => Task::Goto(GotoRun { args, path, idx: 0, lost: 0, stall: Stall::default() }),
                Err(e) => {
                    self.event(out, tick, "fault", json!({ "reason": e.to_string() }));
                    Task::Idle
                }
            },
            BehaviorCommand::Scan(args) => Task::Scan(ScanRun { args, next_at: tick, rotations: 0, leg: None }),
            BehaviorCommand::Grasp { class } => {
                out.commands.push(WorldCommand::Grasp { agent: self.desc.agent_id.clone(), class });
                Task::GraspCheck
            }
            BehaviorCommand::Release { beneficiary } => match body.carrying.clone() {
                Some(object) => {
                    out.commands.push(WorldCommand::Release { agent: self.desc.agent_id.clone() });
                    Task::ReleaseCheck { object, beneficiary }
                }
                None => {
                    self.event(out, tick, "fault", json!({ "reason": "nothing to release" }));
                    Task::Idle
                }
            },
            BehaviorCommand::Hold | BehaviorCommand::Follow { .. } => Task::Idle,
        };
    }

    fn advance(&mut self, world: &WorldState, body: &AgentBody, out: &mut AgentOutput) {
        let tick = world.tick;
        let me = self.desc.agent_id.clone();
        let pos = body.pose.position();
        let task = std::mem::replace(&mut self.task, Task::Idle);
        self.task = match task {
            Task::Idle => Task::Idle,
            Task::Posture { until, event } => {
                if tick >= until {
                    self.event(out, tick, event, json!({}));
                    Task::Idle
                } else {
                    Task::Posture { until, event }
                }
            }
            Task::Trace(mut run) => {
                if run.next_sample < run.samples.len() {
                    let s = run.samples[run.next_sample];
                    run.max_radial = run.max_radial.max((s.distance(run.args.arm_center) - run.args.radius).abs());
                    self.arm_pending.push(s);
                    run.next_sample += 1;
                }
                while run.next_corner < run.corners.len() && pos.distance(run.corners[run.next_corner]) < ARRIVE_EPS {
                    let ideal = run.corners[run.next_corner];
                    run.max_corner = run.max_corner.max(pos.distance(ideal));
                    let index = run.next_corner;
                    self.event(out, tick, "corner_reached", json!({ "index": index, "x": pos.x, "y": pos.y }));
                    run.next_corner += 1;
                }
                if run.next_corner < run.corners.len() {
                    if run.stall.update(pos) {
                        self.event(out, tick, "fault", json!({ "reason": "blocked during trace" }));
                        return;
                    }
                    let target = run.corners[run.next_corner];
                    out.commands.push(WorldCommand::MoveToward { agent: me, target, stop_within: 0.0 });
                    Task::Trace(run)
                } else if run.next_sample < run.samples.len() {
                    Task::Trace(run)
                } else {
                    self.telemetry(body, tick, "trace", out);
                    self.event(
                        out,
                        tick,
                        "trace_done",
                        json!({
                            "max_radial_deviation": run.max_radial,
                            "max_corner_error": run.max_corner,
                            "samples": run.samples.len(),
                            "corners": run.corners.len(),
                        }),
                    );
                    Task::Idle
                }
            }
            Task::Goto(mut run) => {
                if let Some(partner) = run.args.watch.clone() {
                    if self.can_see(world, &partner) {
                        run.lost = 0;
                    } else {
                        run.lost += 1;
                        if run.lost >= LOST_TICKS {
                            self.event(out, tick, "partner_lost", json!({ "partner": partner }));
                            return;
                        }
                    }
                }
                let last = run.path.len() - 1;
                while run.idx < last && pos.distance(run.path[run.idx]) < ARRIVE_EPS {
                    run.idx += 1;
                }
                if run.idx == last && pos.distance(run.path[last]) <= run.args.stop_within + ARRIVE_EPS {
                    let report = run.args.report.clone();
                    let mut data = json!({ "x": pos.x, "y": pos.y });
                    if let Some(i) = run.args.index {
                        data["index"] = json!(i);
                    }
                    self.event(out, tick, &report, data);
                    return;
                }
                if run.stall.update(pos) {
                    self.event(out, tick, "fault", json!({ "reason": "blocked" }));
                    return;
                }
                let stop_within = if run.idx == last { run.args.stop_within } else { 0.0 };
                out.commands.push(WorldCommand::MoveToward { agent: me, target: run.path[run.idx], stop_within });
                Task::Goto(run)
            }
            Task::Scan(mut run) => {
                let mut turned = false;
                if tick >= run.next_at {
                    run.next_at = tick + SCAN_PERIOD;
                    let best = self.best_detection(world, &run.args);
                    let mut found = false;
                    if let Some(d) = best {
                        found = d.qualifies(self.handshake.threshold());
                        let payload = DetectionPayload {
                            detection: d,
                            observer: body.pose,
                            subject: run.args.partner.clone(),
                            mission: self.mission.clone(),
                        };
                        self.outbox.send(out, tick, FrameType::Detection, HUB, &payload);
                    }
                    if found {
                        // hold still and wait for the approach command
                        return;
                    }
                    if run.leg.is_none() {
                        run.rotations += 1;
                        turned = true;
                        out.commands.push(WorldCommand::Turn { agent: me.clone(), delta: SCAN_TURN });
                        if run.args.pattern == SearchPattern::RotateThenLawnmower && run.rotations % 8 == 0 {
                            run.leg = self.pick_leg(world, body.pose);
                        }
                    }
                }
                if let (false, Some(leg)) = (turned, run.leg) {
                    if pos.distance(leg) < ARRIVE_EPS {
                        run.leg = None;
                    } else {
                        out.commands.push(WorldCommand::MoveToward { agent: me, target: leg, stop_within: 0.0 });
                    }
                }
                Task::Scan(run)
            }
            Task::GraspCheck => {
                match &body.carrying {
                    Some(obj) => self.event(out, tick, "grasp_success", json!({ "object": obj })),
                    None => self.event(out, tick, "grasp_fail", json!({})),
                }
                Task::Idle
            }
            Task::ReleaseCheck { object, beneficiary } => {
                let p = world.objects.get(&object).map_or(pos, |o| o.pose.position());
                self.event(out, tick, "placed", json!({ "x": p.x, "y": p.y, "object": object, "beneficiary": beneficiary }));
                Task::Idle
            }
        };
    }

    fn can_see(&self, world: &WorldState, subject: &AgentId) -> bool {
        self.desc.cameras.iter().any(|c| matches!(world.sees(&self.desc.agent_id, &c.camera_id, subject), Ok(Some(_))))
    }

    fn best_detection(&self, world: &WorldState, args: &ScanArgs) -> Option<Detection> {
        let me = &self.desc.agent_id;
        let mut all = Vec::new();
        for cam in &self.desc.cameras {
            match &args.partner {
                Some(partner) => {
                    if let Ok(Some(s)) = world.sees(me, &cam.camera_id, partner) {
                        all.push(Detection {
                            target_class: TargetClass::WheeledPlatform,
                            confidence: s.confidence,
                            range: s.range,
                            bearing: s.bearing,
                            camera_id: cam.camera_id.clone(),
                            tick: world.tick,
                        });
                    }
                }
                None => {
                    if let Ok(ds) = world.perceive(me, &cam.camera_id) {
                        all.extend(ds.into_iter().filter(|d| d.target_class == args.target));
                    }
                }
            }
        }
        all.into_iter().min_by(Detection::preference)
    }

    /// Next lawnmower leg: straight ahead if clear, otherwise none.
    fn pick_leg(&self, world: &WorldState, pose: Pose2D) -> Option<Point> {
        let end = pose.ahead(LAWNMOWER_LEG);
        let clear = world.bounds.contains(end) && !world.obstacles.iter().any(|r| r.intersects_segment(pose.position(), end));
        clear.then_some(end)
    }

    fn telemetry(&mut self, body: &AgentBody, tick: u64, activity: &str, out: &mut AgentOutput) {
        let arm = (!self.arm_pending.is_empty()).then(|| std::mem::take(&mut self.arm_pending));
        let payload = TelemetryPayload {
            pose: body.pose,
            battery: body.battery.level,
            carrying: body.carrying.as_ref().map(|o| o.to_string()),
            following: None,
            activity: Some(activity.to_owned()),
            arm,
        };
        self.outbox.send(out, tick, FrameType::Telemetry, HUB, &payload);
    }
}

impl Controller for Quadruped {
    fn agent_id(&self) -> &AgentId {
        &self.desc.agent_id
    }

    fn descriptor(&self) -> &PlatformDescriptor {
        &self.desc
    }

    fn step(&mut self, world: &WorldState, inbox: &[Frame], out: &mut AgentOutput) {
        let tick = world.tick;
        if !self.handshake.drive(&mut self.outbox, &self.desc, tick, inbox, out) {
            return;
        }
        let Some(body) = world.agent(&self.desc.agent_id) else {
            return;
        };
        for f in inbox.iter().filter(|f| f.frame_type == FrameType::Command) {
            if let Ok((cmd, mission)) = BehaviorCommand::from_payload(&f.payload) {
                self.mission = mission;
                self.start(cmd, world, body, out);
            }
        }
        if body.immobilized() && !matches!(self.task, Task::Idle) {
            self.task = Task::Idle;
            self.event(out, tick, "fault", json!({ "reason": "immobilized" }));
        } else if out.commands.is_empty() {
            // a command started this tick already acted
            self.advance(world, body, out);
        }
        if tick.is_multiple_of(TELEMETRY_EVERY) {
            let activity = self.task.name();
            self.telemetry(body, tick, activity, out);
        }
    }
}
