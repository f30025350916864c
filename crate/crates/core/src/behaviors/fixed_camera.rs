use super::{AgentOutput, Controller, Handshake, Outbox};
use crate::model::{AgentId, CorroborationRequest, CorroborationVerdict, Detection, PlatformDescriptor, Verdict, HUB};
use crate::protocol::{DetectionPayload, Frame, FrameType, TelemetryPayload};
use crate::world::WorldState;

/// Fixed cameras report less often than mobile agents.
const TELEMETRY_EVERY: u64 = 50;
const DETECTION_EVERY: u64 = 20;

/// Wall-mounted security camera. It confirms a corroboration request as
/// soon as the subject is in view and stays silent otherwise.
pub struct FixedCamera {
    desc: PlatformDescriptor,
    outbox: Outbox,
    handshake: Handshake,
    pending: Vec<CorroborationRequest>,
}

impl FixedCamera {
    pub fn new(desc: PlatformDescriptor) -> Self {
        Self { outbox: Outbox::new(desc.agent_id.clone()), desc, handshake: Handshake::default(), pending: Vec::new() }
    }

    fn sees(&self, world: &WorldState, subject: &AgentId) -> bool {
        self.desc.cameras.iter().any(|c| matches!(world.sees(&self.desc.agent_id, &c.camera_id, subject), Ok(Some(_))))
    }
}

impl Controller for FixedCamera {
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
        for f in inbox.iter().filter(|f| f.frame_type == FrameType::CorrRequest) {
            if let Ok(req) = f.payload_as::<CorroborationRequest>() {
                if req.corroborators.contains(&self.desc.agent_id) {
                    self.pending.push(req);
                }
            }
        }

        let mut still_open = Vec::new();
        for req in std::mem::take(&mut self.pending) {
            if tick > req.deadline_tick {
                continue;
            }
            if self.sees(world, &req.subject_agent) {
                let verdict = CorroborationVerdict {
                    request_id: req.request_id,
                    verifier: self.desc.agent_id.clone(),
                    verdict: Verdict::Confirmed,
                    tick,
                };
                self.outbox.send(out, tick, FrameType::CorrVerdict, HUB, &verdict);
            } else {
                still_open.push(req);
            }
        }
        self.pending = still_open;

        if tick.is_multiple_of(DETECTION_EVERY) {
            let best = self
                .desc
                .cameras
                .iter()
                .filter_map(|c| world.perceive(&self.desc.agent_id, &c.camera_id).ok())
                .flatten()
                .min_by(Detection::preference);
            if let Some(detection) = best {
                let payload = DetectionPayload { detection, observer: body.pose, subject: None, mission: None };
                self.outbox.send(out, tick, FrameType::Detection, HUB, &payload);
            }
        }
        if tick.is_multiple_of(TELEMETRY_EVERY) {
            let payload = TelemetryPayload {
                pose: body.pose,
                battery: body.battery.level,
                carrying: None,
                following: None,
                activity: Some(format!("watching {} requests", self.pending.len())),
                arm: None,
            };
            self.outbox.send(out, tick, FrameType::Telemetry, HUB, &payload);
        }
    }
}
