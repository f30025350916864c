//! Offline log verification.
//!
//! Replays a log against the published invariants and lists every
//! violation with the zero-based line offset where it was found.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonical::canonical_serialize;
use crate::geometry::{Point, Pose2D};
use crate::governance::engine::placement_point;
use crate::governance::mission::{GraphParams, MissionDefinition};
use crate::hub::log::{sha256_hex, sidecar_path};
use crate::model::{AgentId, CorroborationRequest, CorroborationVerdict, MissionId, MissionState, MissionType, TargetClass, HUB};
use crate::protocol::{DetectionPayload, ErrorPayload, EventPayload, Frame, FrameType, LogRecord, StatusPayload, TelemetryPayload};

pub const PLACEMENT_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub line: Option<usize>,
    pub rule: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: [{}] {}", self.rule, self.message),
            None => write!(f, "[{}] {}", self.rule, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub lines: usize,
    pub digest: String,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

/// Reads `<log>` and its `.sha256` side-car.
pub fn verify_path(path: &Path) -> std::io::Result<VerifyReport> {
    let bytes = std::fs::read(path)?;
    let sidecar = std::fs::read_to_string(sidecar_path(path)).ok();
    Ok(verify_bytes(&bytes, sidecar.as_deref()))
}

struct Header {
    threshold: f64,
    placement_distance: f64,
    definitions: BTreeMap<MissionType, MissionDefinition>,
}

impl Default for Header {
    fn default() -> Self {
        Self { threshold: 0.6, placement_distance: 2.0, definitions: MissionDefinition::defaults(&GraphParams::default()) }
    }
}

struct MissionTrack {
    mission_type: MissionType,
    executor: Option<AgentId>,
    states: Vec<MissionState>,
    last_line: usize,
    /// Line where the mission last entered each state.
    entered: BTreeMap<MissionState, usize>,
}

#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
    header: Header,
    seqs: BTreeMap<AgentId, u64>,
    last_event_id: u64,
    missions: BTreeMap<MissionId, MissionTrack>,
    /// (agent, line, class, confidence) of every DETECTION.
    detections: Vec<(AgentId, usize, TargetClass, f64)>,
    poses: BTreeMap<AgentId, Pose2D>,
    requests: BTreeMap<u64, CorroborationRequest>,
    rejected: BTreeSet<(AgentId, u64)>,
    last_frame: Option<Frame>,
}

impl Checker {
    fn flag(&mut self, line: Option<usize>, rule: &str, message: impl Into<String>) {
        self.violations.push(Violation { line, rule: rule.to_owned(), message: message.into() });
    }

    fn header(&mut self, line: usize, frame: Option<&Frame>) {
        let parsed = frame
            .filter(|f| f.frame_type == FrameType::Event && f.src.as_str() == HUB)
            .and_then(|f| f.payload_as::<EventPayload>().ok())
            .filter(|e| e.name == "run_started");
        let Some(ev) = parsed else {
            self.flag(Some(line), "header", "first record is not the run_started header");
            return;
        };
        if let Some(t) = ev.data["detection_threshold"].as_f64() {
            self.header.threshold = t;
        }
        if let Some(d) = ev.data["placement_distance"].as_f64() {
            self.header.placement_distance = d;
        }
        match serde_json::from_value(ev.data["definitions"].clone()) {
            Ok(defs) => self.header.definitions = defs,
            Err(e) => self.flag(Some(line), "header", format!("mission definitions unreadable: {e}")),
        }
    }

    fn frame(&mut self, line: usize, f: &Frame) {
        let last = self.seqs.get(&f.src).copied().unwrap_or(0);
        if f.seq != last + 1 {
            self.flag(Some(line), "seq gap", format!("{} seq {} follows {}", f.src, f.seq, last));
        }
        self.seqs.insert(f.src.clone(), f.seq);

        match f.frame_type {
            FrameType::Telemetry => {
                if let Ok(t) = f.payload_as::<TelemetryPayload>() {
                    self.poses.insert(f.src.clone(), t.pose);
                }
            }
            FrameType::Detection => {
                if let Ok(d) = f.payload_as::<DetectionPayload>() {
                    self.detections.push((f.src.clone(), line, d.detection.target_class, d.detection.confidence));
                }
            }
            FrameType::CorrRequest => {
                if let Ok(r) = f.payload_as::<CorroborationRequest>() {
                    self.requests.insert(r.request_id, r);
                }
            }
            FrameType::CorrVerdict => self.verdict(line, f),
            FrameType::MissionStatus => self.status(line, f),
            FrameType::Event => {
                if let Ok(ev) = f.payload_as::<EventPayload>() {
                    if ev.name == "placed" {
                        self.placement(line, &ev);
                    }
                }
            }
            _ => {}
        }
    }

    fn verdict(&mut self, line: usize, f: &Frame) {
        if self.rejected.contains(&(f.src.clone(), f.seq)) {
            return;
        }
        let Ok(v) = f.payload_as::<CorroborationVerdict>() else {
            self.flag(Some(line), "corroboration", "unreadable verdict");
            return;
        };
        let problem = match self.requests.get(&v.request_id) {
            None => Some(format!("verdict for unknown request {}", v.request_id)),
            Some(r) if !r.corroborators.contains(&v.verifier) => Some(format!("{} is not a corroborator of {}", v.verifier, r.request_id)),
            Some(r) if f.tick > r.deadline_tick => Some(format!("verdict at tick {} after deadline {}", f.tick, r.deadline_tick)),
            Some(_) => None,
        };
        if let Some(p) = problem {
            self.flag(Some(line), "corroboration", p);
        }
    }

    fn status(&mut self, line: usize, f: &Frame) {
        let Ok(s) = f.payload_as::<StatusPayload>() else {
            self.flag(Some(line), "state machine", "unreadable MISSION_STATUS");
            return;
        };
        let track = self.missions.entry(s.mission_id.clone()).or_insert_with(|| MissionTrack {
            mission_type: s.mission_type,
            executor: s.participants.first().cloned(),
            states: Vec::new(),
            last_line: line,
            entered: BTreeMap::new(),
        });
        track.states.push(s.state);
        track.last_line = line;
        track.entered.insert(s.state, line);

        let gate = match s.state {
            MissionState::ApproachBox if s.event.as_deref() == Some("box_detected") => {
                Some((MissionState::SearchBattery, TargetClass::BatteryBox))
            }
            MissionState::ApproachPartner if s.event.as_deref() == Some("partner_detected") => {
                Some((MissionState::SearchPartner, TargetClass::WheeledPlatform))
            }
            _ => None,
        };
        if let Some((search, class)) = gate {
            let since = track.entered.get(&search).copied().unwrap_or(0);
            let exec = track.executor.clone();
            let threshold = self.header.threshold;
            let ok =
                self.detections.iter().any(|(a, l, c, conf)| Some(a) == exec.as_ref() && *l > since && *c == class && *conf >= threshold);
            if !ok {
                self.flag(
                    Some(line),
                    "threshold gate",
                    format!("{} entered {} without a prior {:?} detection at confidence >= {threshold}", s.mission_id, s.state, class),
                );
            }
        }
    }

    fn placement(&mut self, line: usize, ev: &EventPayload) {
        let (Some(b), Some(x), Some(y)) = (ev.data["beneficiary"].as_str(), ev.data["x"].as_f64(), ev.data["y"].as_f64()) else {
            self.flag(Some(line), "placement", "placed event lacks beneficiary or position");
            return;
        };
        let Some(pose) = self.poses.get(&AgentId::new(b)).copied() else {
            self.flag(Some(line), "placement", format!("no telemetry from beneficiary {b} before placement"));
            return;
        };
        let expected = placement_point(pose, self.header.placement_distance);
        let err = Point::new(x, y).distance(expected);
        if err > PLACEMENT_TOLERANCE {
            self.flag(Some(line), "placement", format!("box at ({x}, {y}) is {err:.3} m from the expected point"));
        }
    }

    fn finish(&mut self, last_line: usize) {
        let missions = std::mem::take(&mut self.missions);
        for (id, m) in &missions {
            match self.header.definitions.get(&m.mission_type) {
                Some(def) => {
                    if let Err(e) = def.check_history(&m.states) {
                        self.flag(Some(m.last_line), "state machine", format!("{id}: {e}"));
                    }
                }
                None => self.flag(Some(m.last_line), "state machine", format!("{id}: no definition for {:?}", m.mission_type)),
            }
        }
        let ended = self.last_frame.as_ref().is_some_and(|f| f.frame_type == FrameType::Bye && f.src.as_str() == HUB);
        if !ended {
            self.flag(Some(last_line), "truncated", "log does not end with the hub's BYE");
        }
    }
}

pub fn verify_bytes(bytes: &[u8], sidecar: Option<&str>) -> VerifyReport {
    let mut c = Checker::default();
    let digest = sha256_hex(bytes);
    match sidecar.map(str::trim) {
        Some(expected) if expected == digest => {}
        Some(expected) => c.flag(None, "hash", format!("digest {digest} does not match side-car {expected}")),
        None => c.flag(None, "hash", "side-car digest missing"),
    }

    let mut lines: Vec<&[u8]> = bytes.split_inclusive(|b| *b == b'\n').collect();
    if lines.last().is_some_and(|l| !l.ends_with(b"\n")) {
        let n = lines.len() - 1;
        c.flag(Some(n), "truncated", "final line has no terminator");
        lines.pop();
    }

    // rejections are logged after the frame they refer to
    for raw in &lines {
        if let Ok(f) = serde_json::from_slice::<Frame>(raw) {
            if f.frame_type == FrameType::Error && f.src.as_str() == HUB {
                if let Some(seq) = f.payload_as::<ErrorPayload>().ok().and_then(|e| e.ref_seq) {
                    c.rejected.insert((f.dst.clone(), seq));
                }
            }
        }
    }

    for (line, raw) in lines.iter().enumerate() {
        let record: LogRecord = match serde_json::from_slice(raw) {
            Ok(r) => r,
            Err(e) => {
                c.flag(Some(line), "parse", e.to_string());
                continue;
            }
        };
        match canonical_serialize(&record) {
            Ok(mut canon) => {
                canon.push(b'\n');
                if canon != *raw {
                    c.flag(Some(line), "canonical", "record is not in canonical form");
                }
            }
            Err(e) => c.flag(Some(line), "canonical", e.to_string()),
        }
        if line == 0 {
            let first = match &record {
                LogRecord::Frame(f) => Some(f),
                LogRecord::C3(_) => None,
            };
            c.header(line, first);
        }
        match record {
            LogRecord::C3(ev) => {
                if ev.event_id != c.last_event_id + 1 {
                    c.flag(Some(line), "c3 order", format!("event_id {} follows {}", ev.event_id, c.last_event_id));
                }
                c.last_event_id = ev.event_id;
            }
            LogRecord::Frame(f) => {
                c.frame(line, &f);
                c.last_frame = Some(f);
            }
        }
    }
    if lines.is_empty() {
        c.flag(None, "header", "log is empty");
    }
    c.finish(lines.len().saturating_sub(1));
    VerifyReport { lines: lines.len(), digest, violations: c.violations }
}
