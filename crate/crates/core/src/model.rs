//! Shared domain types: platforms, batteries, detections, C³ events and
//! corroboration records.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use crate::geometry::{Point, Pose2D};

/// Destination token for frames addressed to the hub itself.
pub const HUB: &str = "hub";
/// Destination token for broadcast frames.
pub const BROADCAST: &str = "*";

/// Camera layout every quadruped must carry, in mount order.
pub const QUADRUPED_CAMERAS: [&str; 5] = ["front_left", "front_right", "left", "right", "back"];

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl From<&$name> for $name {
            fn from(s: &$name) -> Self {
                s.clone()
            }
        }

        impl PartialEq<str> for $name {
            fn eq(&self, other: &str) -> bool {
                self.0 == other
            }
        }

        impl PartialEq<&str> for $name {
            fn eq(&self, other: &&str) -> bool {
                self.0 == *other
            }
        }
    };
}

string_id!(
    /// Fleet-wide unique agent identifier.
    AgentId
);
string_id!(ObjectId);
string_id!(MissionId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatformKind {
    Quadruped,
    Wheeled,
    Aerial,
    FixedCamera,
    Operator,
}

impl fmt::Display for PlatformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PlatformKind::Quadruped => "quadruped",
            PlatformKind::Wheeled => "wheeled",
            PlatformKind::Aerial => "aerial",
            PlatformKind::FixedCamera => "fixed_camera",
            PlatformKind::Operator => "operator",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub camera_id: String,
    /// Radians relative to the body heading.
    pub mount_bearing: f64,
    pub fov: f64,
    pub max_range: f64,
}

impl CameraSpec {
    pub fn new(camera_id: impl Into<String>, mount_bearing: f64, fov: f64, max_range: f64) -> Self {
        Self { camera_id: camera_id.into(), mount_bearing, fov, max_range }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformDescriptor {
    pub agent_id: AgentId,
    pub kind: PlatformKind,
    pub cameras: Vec<CameraSpec>,
    pub has_manipulator: bool,
    pub battery_capable: bool,
    pub max_speed: f64,
}

impl PlatformDescriptor {
    pub fn camera(&self, camera_id: &str) -> Option<&CameraSpec> {
        self.cameras.iter().find(|c| c.camera_id == camera_id)
    }

    /// Can this platform act as the helper in a battery replacement?
    /// Reference layout for each platform kind: the quadruped's five body
    /// cameras, a forward camera on the wheeled and aerial platforms, and a
    /// single wide lens on fixed cameras.
    pub fn standard(agent_id: impl Into<AgentId>, kind: PlatformKind) -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        let (cameras, has_manipulator, battery_capable, max_speed) = match kind {
            PlatformKind::Quadruped => (
                QUADRUPED_CAMERAS
                    .iter()
                    .zip([0.4, -0.4, FRAC_PI_2, -FRAC_PI_2, PI])
                    .map(|(c, b)| CameraSpec::new(*c, b, 1.6, 10.0))
                    .collect(),
                true,
                false,
                1.0,
            ),
            PlatformKind::Wheeled => (vec![CameraSpec::new("front", 0.0, 1.2, 8.0)], false, true, 0.8),
            PlatformKind::Aerial => (vec![CameraSpec::new("front", 0.0, 1.4, 12.0)], false, false, 2.0),
            PlatformKind::FixedCamera => (vec![CameraSpec::new("lens", 0.0, 1.8, 12.0)], false, false, 0.0),
            PlatformKind::Operator => (Vec::new(), false, false, 0.0),
        };
        Self { agent_id: agent_id.into(), kind, cameras, has_manipulator, battery_capable, max_speed }
    }

    pub fn can_fetch_battery(&self) -> bool {
        self.kind == PlatformKind::Quadruped && self.has_manipulator
    }
}

/// A single invariant breach found while validating data. Violations are
/// reported, not raised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

impl Violation {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

/// Checks a descriptor against the platform invariants. `registered` holds the
/// ids already present in the fleet.
pub fn validate_platform(descriptor: &PlatformDescriptor, registered: &BTreeSet<AgentId>) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let id = &descriptor.agent_id;

    if id.as_str().is_empty() || id.as_str() == HUB || id.as_str() == BROADCAST {
        out.push(Violation::new("agent id", format!("'{id}' is reserved or empty")));
    }
    if registered.contains(id) {
        out.push(Violation::new("duplicate id", format!("'{id}' is already registered")));
    }
    if !(descriptor.max_speed.is_finite() && descriptor.max_speed >= 0.0) {
        out.push(Violation::new("max speed", "max_speed must be finite and non-negative"));
    }
    match descriptor.kind {
        PlatformKind::Quadruped => {
            if descriptor.cameras.len() != QUADRUPED_CAMERAS.len() {
                out.push(Violation::new("camera count", format!("quadruped needs 5 cameras, has {}", descriptor.cameras.len())));
            }
            if !descriptor.has_manipulator {
                out.push(Violation::new("manipulator", "quadruped must carry a manipulator"));
            }
        }
        PlatformKind::FixedCamera => {
            if descriptor.max_speed != 0.0 {
                out.push(Violation::new(
                    "fixed camera immobile",
                    format!("fixed camera max_speed must be 0, got {}", descriptor.max_speed),
                ));
            }
            if descriptor.cameras.is_empty() {
                out.push(Violation::new("camera count", "fixed camera needs a camera"));
            }
        }
        _ => {}
    }
    let mut seen = BTreeSet::new();
    for cam in &descriptor.cameras {
        if !seen.insert(cam.camera_id.as_str()) {
            out.push(Violation::new("camera id", format!("duplicate camera '{}'", cam.camera_id)));
        }
        if !(cam.fov > 0.0 && cam.fov <= std::f64::consts::PI) {
            out.push(Violation::new("camera fov", format!("camera '{}' fov {} outside (0, pi]", cam.camera_id, cam.fov)));
        }
        if !(cam.max_range > 0.0 && cam.max_range.is_finite()) {
            out.push(Violation::new("camera range", format!("camera '{}' max_range must be positive", cam.camera_id)));
        }
        if !cam.mount_bearing.is_finite() {
            out.push(Violation::new("camera bearing", format!("camera '{}'", cam.camera_id)));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryState {
    pub level: f64,
    /// Fraction per simulated second.
    pub drain_rate: f64,
    pub alert_threshold: f64,
    pub immobilize_threshold: f64,
}

impl Default for BatteryState {
    fn default() -> Self {
        Self { level: 1.0, drain_rate: 0.0, alert_threshold: 0.20, immobilize_threshold: 0.05 }
    }
}

impl BatteryState {
    pub fn is_immobilized(&self) -> bool {
        self.level <= self.immobilize_threshold
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.level) {
            out.push(Violation::new("battery level", format!("level {} outside [0,1]", self.level)));
        }
        if !(0.0 <= self.immobilize_threshold && self.immobilize_threshold < self.alert_threshold && self.alert_threshold < 1.0) {
            out.push(Violation::new("battery thresholds", "need 0 <= immobilize_threshold < alert_threshold < 1"));
        }
        if !(self.drain_rate >= 0.0 && self.drain_rate.is_finite()) {
            out.push(Violation::new("battery drain", "drain_rate must be non-negative"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClass {
    BatteryBox,
    WheeledPlatform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub target_class: TargetClass,
    pub confidence: f64,
    pub range: f64,
    /// Radians relative to the observer's body heading.
    pub bearing: f64,
    pub camera_id: String,
    pub tick: u64,
}

impl Detection {
    pub fn qualifies(&self, threshold: f64) -> bool {
        self.confidence >= threshold
    }

    /// Orders detections by preference: higher confidence first, then nearer.
    pub fn preference(a: &Detection, b: &Detection) -> std::cmp::Ordering {
        b.confidence.total_cmp(&a.confidence).then(a.range.total_cmp(&b.range))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C3Kind {
    Cooperation,
    Collaboration,
    Corroboration,
}

impl C3Kind {
    pub const ALL: [C3Kind; 3] = [C3Kind::Cooperation, C3Kind::Collaboration, C3Kind::Corroboration];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionPattern {
    JointTaskStep,
    AssistanceOnFault,
    IndependentVerification,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("unknown interaction pattern '{0}'")]
    UnknownPattern(String),
}

impl FromStr for InteractionPattern {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "joint_task_step" => Ok(Self::JointTaskStep),
            "assistance_on_fault" => Ok(Self::AssistanceOnFault),
            "independent_verification" => Ok(Self::IndependentVerification),
            other => Err(ClassifyError::UnknownPattern(other.to_owned())),
        }
    }
}

/// Maps an inter-agent interaction onto its C³ governance kind.
///
/// The kind is decided by the interaction pattern alone; the platform kinds are
/// carried for the event record and do not alter the classification.
pub fn classify_interaction(_initiator: PlatformKind, _responder: PlatformKind, pattern: InteractionPattern) -> C3Kind {
    match pattern {
        InteractionPattern::JointTaskStep => C3Kind::Cooperation,
        InteractionPattern::AssistanceOnFault => C3Kind::Collaboration,
        InteractionPattern::IndependentVerification => C3Kind::Corroboration,
    }
}

/// String-pattern entry point used at the wire boundary.
pub fn classify_interaction_str(initiator: PlatformKind, responder: PlatformKind, pattern: &str) -> Result<C3Kind, ClassifyError> {
    Ok(classify_interaction(initiator, responder, pattern.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbiosisMode {
    Mutualism,
    Commensalism,
    Parasitism,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C3Event {
    pub event_id: u64,
    pub kind: C3Kind,
    pub initiator: AgentId,
    /// An agent id, or "hub" / "operator".
    pub responder: AgentId,
    pub mission: Option<MissionId>,
    pub tick: u64,
    pub detail: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbiosis: Option<SymbiosisMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MissionType {
    M1,
    M2,
    M3,
}

impl MissionType {
    pub const ALL: [MissionType; 3] = [MissionType::M1, MissionType::M2, MissionType::M3];
}

impl fmt::Display for MissionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for MissionType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "M1" | "m1" => Ok(MissionType::M1),
            "M2" | "m2" => Ok(MissionType::M2),
            "M3" | "m3" => Ok(MissionType::M3),
            other => Err(format!("unknown mission type '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MissionState {
    Triggered,
    MotorsOn,
    Standing,
    ArmUnstowed,
    ConcurrentTrace,
    AwaitCorroboration,
    Waypoint,
    AwaitFinalCorroboration,
    AlertReceived,
    #[serde(rename = "AwaitHITLApproval")]
    AwaitHitlApproval,
    SearchBattery,
    ApproachBox,
    Grasp,
    SearchPartner,
    ApproachPartner,
    Place,
    SwapInProgress,
    Completed,
    Unverified,
    Aborted,
}

impl MissionState {
    pub const ALL: [MissionState; 20] = [
        MissionState::Triggered,
        MissionState::MotorsOn,
        MissionState::Standing,
        MissionState::ArmUnstowed,
        MissionState::ConcurrentTrace,
        MissionState::AwaitCorroboration,
        MissionState::Waypoint,
        MissionState::AwaitFinalCorroboration,
        MissionState::AlertReceived,
        MissionState::AwaitHitlApproval,
        MissionState::SearchBattery,
        MissionState::ApproachBox,
        MissionState::Grasp,
        MissionState::SearchPartner,
        MissionState::ApproachPartner,
        MissionState::Place,
        MissionState::SwapInProgress,
        MissionState::Completed,
        MissionState::Unverified,
        MissionState::Aborted,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, MissionState::Completed | MissionState::Unverified | MissionState::Aborted)
    }
}

impl fmt::Display for MissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MissionState::AwaitHitlApproval => f.write_str("AwaitHITLApproval"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub tick: u64,
    pub state: MissionState,
    pub cause: String,
}

/// Counters that refine raw mission events (grasp retries, route progress).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MissionProgress {
    pub grasp_attempts: u32,
    pub grasp_retry_cap: u32,
    pub waypoint_index: usize,
    pub waypoint_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionInstance {
    pub mission_id: MissionId,
    pub mission_type: MissionType,
    pub state: MissionState,
    pub history: Vec<HistoryEntry>,
    pub participants: Vec<AgentId>,
    #[serde(default)]
    pub progress: MissionProgress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Confirmed,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorroborationRequest {
    pub request_id: u64,
    pub mission_id: MissionId,
    /// What is being corroborated, e.g. "m1_trace".
    pub subject: String,
    /// The agent whose state or action is under verification.
    pub subject_agent: AgentId,
    pub corroborators: Vec<AgentId>,
    pub deadline_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorroborationVerdict {
    pub request_id: u64,
    pub verifier: AgentId,
    pub verdict: Verdict,
    pub tick: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn quadruped(id: &str) -> PlatformDescriptor {
        PlatformDescriptor {
            agent_id: AgentId::new(id),
            kind: PlatformKind::Quadruped,
            cameras: QUADRUPED_CAMERAS.iter().map(|c| CameraSpec::new(*c, 0.0, 1.6, 10.0)).collect(),
            has_manipulator: true,
            battery_capable: false,
            max_speed: 1.0,
        }
    }

    #[test]
    fn classify_examples() {
        use InteractionPattern::*;
        use PlatformKind::*;
        assert_eq!(classify_interaction(Aerial, Quadruped, IndependentVerification), C3Kind::Corroboration);
        assert_eq!(classify_interaction(Quadruped, Wheeled, AssistanceOnFault), C3Kind::Collaboration);
        assert_eq!(classify_interaction(Aerial, Quadruped, JointTaskStep), C3Kind::Cooperation);
    }

    #[test]
    fn classify_is_total_and_onto() {
        let kinds =
            [PlatformKind::Quadruped, PlatformKind::Wheeled, PlatformKind::Aerial, PlatformKind::FixedCamera, PlatformKind::Operator];
        let mut range = BTreeSet::new();
        for a in kinds {
            for b in kinds {
                for p in ["joint_task_step", "assistance_on_fault", "independent_verification"] {
                    range.insert(classify_interaction_str(a, b, p).unwrap());
                }
            }
        }
        assert_eq!(range, C3Kind::ALL.into_iter().collect());
    }

    #[test]
    fn classify_unknown_pattern() {
        let err = classify_interaction_str(PlatformKind::Aerial, PlatformKind::Wheeled, "gossip").unwrap_err();
        assert_eq!(err, ClassifyError::UnknownPattern("gossip".into()));
    }

    #[test]
    fn validate_quadruped_ok() {
        assert!(validate_platform(&quadruped("spot"), &BTreeSet::new()).is_ok());
    }

    #[test]
    fn validate_quadruped_four_cameras() {
        let mut d = quadruped("spot");
        d.cameras.pop();
        let v = validate_platform(&d, &BTreeSet::new()).unwrap_err();
        assert!(v.iter().any(|v| v.code == "camera count"));
    }

    #[test]
    fn validate_fixed_camera_speed() {
        let d = PlatformDescriptor {
            agent_id: AgentId::new("cam-1"),
            kind: PlatformKind::FixedCamera,
            cameras: vec![CameraSpec::new("main", 0.0, 1.2, 8.0)],
            has_manipulator: false,
            battery_capable: false,
            max_speed: 1.0,
        };
        let v = validate_platform(&d, &BTreeSet::new()).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, "fixed camera immobile");
    }

    #[test]
    fn validate_duplicate_id() {
        let registered: BTreeSet<AgentId> = [AgentId::new("spot")].into();
        let v = validate_platform(&quadruped("spot"), &registered).unwrap_err();
        assert!(v.iter().any(|v| v.code == "duplicate id"));
    }

    #[test]
    fn battery_threshold_ordering() {
        let mut b = BatteryState::default();
        assert!(b.validate().is_empty());
        b.immobilize_threshold = 0.3;
        assert_eq!(b.validate().len(), 1);
    }

    #[test]
    fn detection_preference_orders_confidence_then_range() {
        let d = |c: f64, r: f64| Detection {
            target_class: TargetClass::BatteryBox,
            confidence: c,
            range: r,
            bearing: 0.0,
            camera_id: "x".into(),
            tick: 0,
        };
        let mut v = [d(0.65, 1.0), d(0.8, 3.0), d(0.8, 2.0)];
        v.sort_by(Detection::preference);
        assert_eq!((v[0].confidence, v[0].range), (0.8, 2.0));
        assert_eq!(v[2].confidence, 0.65);
    }
}
