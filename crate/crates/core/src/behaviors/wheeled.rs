use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AgentOutput, BehaviorCommand, Controller, Handshake, Outbox, TELEMETRY_EVERY};
use crate::geometry::Point;
use crate::model::{AgentId, ObjectId, PlatformDescriptor, TargetClass, HUB};
use crate::protocol::{AlertPayload, Frame, FrameType, TelemetryPayload};
use crate::world::{AgentBody, WorldCommand, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WheeledParams {
    /// Ticks from swap start until the new battery is in.
    pub swap_ticks: u64,
    /// Patrol loop; empty means stay put.
    #[serde(default)]
    pub patrol: Vec<Point>,
}

impl Default for WheeledParams {
    fn default() -> Self {
        Self { swap_ticks: 300, patrol: Vec::new() }
    }
}

#[derive(Debug, Clone)]
struct Swap {
    object: ObjectId,
    started: u64,
    issued: bool,
}

/// Battery-capable ground platform that patrols, raises a low-battery alert
/// and swaps in a delivered battery.
pub struct Wheeled {
    desc: PlatformDescriptor,
    params: WheeledParams,
    outbox: Outbox,
    handshake: Handshake,
    patrol_idx: usize,
    alerted: bool,
    immobile_reported: bool,
    swap: Option<Swap>,
    /// Set by a hold command or a goto that has arrived.
    parked: bool,
    goto: Option<Point>,
}

impl Wheeled {
    pub fn new(desc: PlatformDescriptor, params: WheeledParams) -> Self {
        Self {
            outbox: Outbox::new(desc.agent_id.clone()),
            desc,
            params,
            handshake: Handshake::default(),
            patrol_idx: 0,
            alerted: false,
            immobile_reported: false,
            swap: None,
            parked: false,
            goto: None,
        }
    }

    fn battery_cycle(&mut self, world: &WorldState, body: &AgentBody, out: &mut AgentOutput) {
        let tick = world.tick;
        let b = &body.battery;

        if let Some(swap) = &mut self.swap {
            if swap.issued {
                if b.level > b.alert_threshold {
                    let object = swap.object.clone();
                    self.swap = None;
                    self.alerted = false;
                    self.immobile_reported = false;
                    self.outbox.event(out, tick, "swap_complete", None, json!({ "level": b.level, "object": object }));
                }
            } else if tick >= swap.started + self.params.swap_ticks {
                swap.issued = true;
                out.commands.push(WorldCommand::SwapBattery { agent: self.desc.agent_id.clone(), object: swap.object.clone() });
            }
        }

        if !self.alerted && b.level <= b.alert_threshold {
            self.alerted = true;
            let alert = AlertPayload { kind: "battery_low".into(), level: b.level };
            self.outbox.send(out, tick, FrameType::Alert, HUB, &alert);
        }
        if b.is_immobilized() && !self.immobile_reported {
            self.immobile_reported = true;
            self.outbox.event(out, tick, "immobilized", None, json!({ "level": b.level }));
        }
        if self.alerted && self.swap.is_none() {
            let here = body.pose.position();
            let resting = world.objects.iter().find(|(_, o)| {
                o.class == TargetClass::BatteryBox
                    && o.carried_by.is_none()
                    && !o.consumed
                    && o.pose.position().distance(here) <= world.params.swap_radius
            });
            if let Some((id, _)) = resting {
                self.swap = Some(Swap { object: id.clone(), started: tick, issued: false });
                self.outbox.event(out, tick, "swap_started", None, json!({ "object": id }));
            }
        }
    }

    fn drive(&mut self, body: &AgentBody, out: &mut AgentOutput) {
        if body.immobilized() || self.alerted || self.swap.is_some() {
            return;
        }
        let here = body.pose.position();
        let agent = self.desc.agent_id.clone();
        if let Some(target) = self.goto {
            if here.distance(target) < 1e-6 {
                self.goto = None;
                self.parked = true;
            } else {
                out.commands.push(WorldCommand::MoveToward { agent, target, stop_within: 0.0 });
            }
            return;
        }
        if self.parked || self.params.patrol.is_empty() {
            return;
        }
        let mut target = self.params.patrol[self.patrol_idx];
        if here.distance(target) < 1e-6 {
            self.patrol_idx = (self.patrol_idx + 1) % self.params.patrol.len();
            target = self.params.patrol[self.patrol_idx];
        }
        out.commands.push(WorldCommand::MoveToward { agent, target, stop_within: 0.0 });
    }
}

impl Controller for Wheeled {
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
            match BehaviorCommand::from_payload(&f.payload) {
                Ok((BehaviorCommand::Hold, _)) => {
                    self.parked = true;
                    self.goto = None;
                }
                Ok((BehaviorCommand::Goto(g), _)) => self.goto = Some(Point::new(g.x, g.y)),
                _ => {}
            }
        }
        self.battery_cycle(world, body, out);
        self.drive(body, out);
        if tick.is_multiple_of(TELEMETRY_EVERY) {
            let activity = if self.swap.is_some() {
                "swapping"
            } else if body.immobilized() {
                "immobilized"
            } else if self.alerted {
                "awaiting_assist"
            } else {
                "patrol"
            };
            let payload = TelemetryPayload {
                pose: body.pose,
                battery: body.battery.level,
                carrying: None,
                following: None,
                activity: Some(activity.into()),
                arm: None,
            };
            self.outbox.send(out, tick, FrameType::Telemetry, HUB, &payload);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose2D, Rect};
    use crate::model::{BatteryState, PlatformKind};
    use crate::protocol::{EventPayload, WelcomePayload};
    use crate::world::WorldObject;

    fn setup(level: f64, drain: f64) -> (Wheeled, WorldState) {
        let desc = PlatformDescriptor::standard("w", PlatformKind::Wheeled);
        let mut w = WorldState::new(Rect::new(Point::new(-20.0, -20.0), Point::new(20.0, 20.0)), 0.1, 1);
        let battery = BatteryState { level, drain_rate: drain, ..BatteryState::default() };
        w.agents.insert(
            desc.agent_id.clone(),
            AgentBody { descriptor: desc.clone(), pose: Pose2D::new(0.0, 0.0, 0.0), battery, carrying: None },
        );
        let params = WheeledParams { swap_ticks: 300, patrol: vec![Point::new(3.0, 0.0), Point::new(-3.0, 0.0)] };
        (Wheeled::new(desc, params), w)
    }

    fn run(c: &mut Wheeled, w: &mut WorldState, ticks: u64) -> Vec<Frame> {
        let mut sent = Vec::new();
        let mut inbox = vec![Frame::new(
            FrameType::Welcome,
            1,
            0,
            HUB,
            "w",
            &WelcomePayload { agent_id: AgentId::new("w"), tick_dt: 0.1, detection_threshold: 0.6 },
        )];
        for _ in 0..ticks {
            let mut out = AgentOutput::default();
            c.step(w, &inbox, &mut out);
            inbox.clear();
            w.step_mut(&out.commands);
            sent.extend(out.frames);
        }
        sent
    }

    fn event_names(frames: &[Frame]) -> Vec<String> {
        frames.iter().filter(|f| f.frame_type == FrameType::Event).map(|f| f.payload_as::<EventPayload>().unwrap().name).collect()
    }

    #[test]
    fn single_alert_on_crossing() {
        // 0.21 -> 0.19 within a handful of ticks, then keeps draining
        let (mut c, mut w) = setup(0.21, 0.05);
        let frames = run(&mut c, &mut w, 200);
        let alerts: Vec<AlertPayload> =
            frames.iter().filter(|f| f.frame_type == FrameType::Alert).map(|f| f.payload_as().unwrap()).collect();
        assert_eq!(alerts.len(), 1);
        assert!(alerts[0].level <= 0.20 && alerts[0].level > 0.19);
        assert_eq!(event_names(&frames).iter().filter(|n| *n == "immobilized").count(), 1);
    }

    #[test]
    fn swap_after_box_placed() {
        let (mut c, mut w) = setup(0.19, 0.0);
        run(&mut c, &mut w, 5);
        w.objects.insert(
            ObjectId::new("box"),
            WorldObject { class: TargetClass::BatteryBox, pose: Pose2D::new(2.0, 0.0, 0.0), carried_by: None, consumed: false },
        );
        let start = w.tick;
        let frames = run(&mut c, &mut w, 310);
        let names = event_names(&frames);
        assert!(names.contains(&"swap_started".to_string()));
        assert!(names.contains(&"swap_complete".to_string()));
        let done = frames.iter().find(|f| f.frame_type == FrameType::Event && f.payload["name"] == "swap_complete").unwrap();
        assert_eq!(done.tick, start + 301);
        assert_eq!(w.agents[&AgentId::new("w")].battery.level, 1.0);
        assert!(w.objects[&ObjectId::new("box")].consumed);
    }

    #[test]
    fn holds_after_alert() {
        let (mut c, mut w) = setup(0.19, 0.0);
        run(&mut c, &mut w, 50);
        assert_eq!(w.agents[&AgentId::new("w")].pose.position(), Point::new(0.0, 0.0));
    }

    #[test]
    fn patrols_when_healthy() {
        let (mut c, mut w) = setup(1.0, 0.0);
        run(&mut c, &mut w, 50);
        assert_ne!(w.agents[&AgentId::new("w")].pose.position(), Point::new(0.0, 0.0));
    }
}
