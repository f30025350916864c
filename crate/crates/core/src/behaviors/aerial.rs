use super::{AgentOutput, BehaviorCommand, Controller, Handshake, Outbox, TELEMETRY_EVERY};
use crate::model::{AgentId, CorroborationRequest, CorroborationVerdict, PlatformDescriptor, Verdict, HUB};
use crate::protocol::{Frame, FrameType, TelemetryPayload};
use crate::world::{WorldCommand, WorldState};

/// Slack around the follow distance before the drone repositions.
const FOLLOW_SLACK: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
enum Mode {
    Hold,
    Follow { target: AgentId, distance: f64 },
}

/// Operator-steered drone. It never picks its own destination; it only
/// follows or holds as commanded and answers corroboration requests from
/// what its camera shows.
pub struct Aerial {
    desc: PlatformDescriptor,
    outbox: Outbox,
    handshake: Handshake,
    mode: Mode,
}

impl Aerial {
    pub fn new(desc: PlatformDescriptor) -> Self {
        Self { outbox: Outbox::new(desc.agent_id.clone()), desc, handshake: Handshake::default(), mode: Mode::Hold }
    }

    fn verdict_for(&self, world: &WorldState, req: &CorroborationRequest) -> Verdict {
        let me = &self.desc.agent_id;
        let visible = self.desc.cameras.iter().any(|c| matches!(world.sees(me, &c.camera_id, &req.subject_agent), Ok(Some(_))));
        if visible {
            Verdict::Confirmed
        } else {
            Verdict::Denied
        }
    }
}

impl Controller for Aerial {
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
        for f in inbox {
            match f.frame_type {
                FrameType::Command => match BehaviorCommand::from_payload(&f.payload) {
                    Ok((BehaviorCommand::Follow { target, distance }, _)) => self.mode = Mode::Follow { target, distance },
                    Ok((BehaviorCommand::Hold, _)) => self.mode = Mode::Hold,
                    _ => {}
                },
                FrameType::CorrRequest => {
                    let Ok(req) = f.payload_as::<CorroborationRequest>() else { continue };
                    if tick > req.deadline_tick || !req.corroborators.contains(&self.desc.agent_id) {
                        continue;
                    }
                    let verdict = CorroborationVerdict {
                        request_id: req.request_id,
                        verifier: self.desc.agent_id.clone(),
                        verdict: self.verdict_for(world, &req),
                        tick,
                    };
                    self.outbox.send(out, tick, FrameType::CorrVerdict, HUB, &verdict);
                }
                _ => {}
            }
        }

        if let Mode::Follow { target, distance } = &self.mode {
            if let Some(t) = world.agent(target) {
                let me = self.desc.agent_id.clone();
                let here = body.pose.position();
                let there = t.pose.position();
                if here.distance(there) > distance + FOLLOW_SLACK {
                    out.commands.push(WorldCommand::MoveToward { agent: me, target: there, stop_within: *distance });
                } else if here.distance(there) > 0.0 {
                    out.commands.push(WorldCommand::Face { agent: me, heading: (there - here).angle() });
                }
            }
        }

        if tick.is_multiple_of(TELEMETRY_EVERY) {
            let following = match &self.mode {
                Mode::Follow { target, .. } => Some(target.clone()),
                Mode::Hold => None,
            };
            let payload = TelemetryPayload {
                pose: body.pose,
                battery: body.battery.level,
                carrying: None,
                following,
                activity: Some(if matches!(self.mode, Mode::Hold) { "hold" } else { "follow" }.into()),
                arm: None,
            };
            self.outbox.send(out, tick, FrameType::Telemetry, HUB, &payload);
        }
    }
}
