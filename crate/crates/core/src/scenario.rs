//! Scenario files: the complete description of a run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behaviors::{Aerial, Controller, FixedCamera, Operator, OperatorScript, Quadruped, Wheeled, WheeledParams};
use crate::geometry::{Point, Pose2D, Rect};
use crate::governance::engine::{Engine, GovConfig};
use crate::governance::mission::MissionDefinition;
use crate::hub::{EventLog, HubConfig, TwinHub};
use crate::model::{validate_platform, AgentId, BatteryState, MissionType, ObjectId, PlatformDescriptor, PlatformKind, TargetClass};
use crate::sim::Simulation;
use crate::world::{AgentBody, WorldObject, WorldParams, WorldState, DEFAULT_TICK_DT};

const BUNDLED: [(&str, &str); 4] = [
    ("m1", include_str!("../scenarios/m1.json")),
    ("m2", include_str!("../scenarios/m2.json")),
    ("m3", include_str!("../scenarios/m3.json")),
    ("full", include_str!("../scenarios/full.json")),
];

pub const BUNDLED_PREFIX: &str = "bundled:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: AgentId,
    pub kind: PlatformKind,
    /// Required for every kind except the operator, which has no body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose2D>,
    /// Replaces the standard descriptor for `kind`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<PlatformDescriptor>,
    #[serde(default)]
    pub battery: BatteryState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wheeled: Option<WheeledParams>,
}

impl AgentSpec {
    pub fn descriptor(&self) -> PlatformDescriptor {
        self.descriptor.clone().unwrap_or_else(|| PlatformDescriptor::standard(self.id.clone(), self.kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: ObjectId,
    pub class: TargetClass,
    pub pose: Pose2D,
}

fn default_dt() -> f64 {
    DEFAULT_TICK_DT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub tick_dt: f64,
    pub max_ticks: u64,
    pub bounds: Rect,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub governance: GovConfig,
    /// Replacement transition graphs, keyed by their mission type.
    #[serde(default)]
    pub definitions: Vec<MissionDefinition>,
    #[serde(default)]
    pub operator: OperatorScript,
    #[serde(default)]
    pub world: WorldParams,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown bundled scenario '{0}' (have m1, m2, m3, full)")]
    UnknownBundled(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl Scenario {
    /// Loads `bundled:<name>` or a JSON file path.
    pub fn load(source: &str) -> Result<Self, ScenarioError> {
        let text = match source.strip_prefix(BUNDLED_PREFIX) {
            Some(name) => bundled(name).ok_or_else(|| ScenarioError::UnknownBundled(name.to_owned()))?.to_owned(),
            None => std::fs::read_to_string(Path::new(source))?,
        };
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn definitions(&self) -> BTreeMap<MissionType, MissionDefinition> {
        let mut defs = MissionDefinition::defaults(&self.governance.graph);
        for d in &self.definitions {
            defs.insert(d.mission_type, d.clone());
        }
        defs
    }

    fn count(&self, pred: impl Fn(&PlatformDescriptor) -> bool) -> usize {
        self.agents.iter().filter(|a| pred(&a.descriptor())).count()
    }

    /// Every problem found, as human-readable diagnostics.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        if self.max_ticks == 0 {
            errs.push("max_ticks must be positive".to_owned());
        }
        if !(self.tick_dt > 0.0 && self.tick_dt.is_finite()) {
            errs.push(format!("tick_dt {} must be positive", self.tick_dt));
        }
        let t = self.governance.detection_threshold;
        if !(t > 0.0 && t <= 1.0) {
            errs.push(format!("detection_threshold {t} outside (0, 1]"));
        }
        if !(self.bounds.min.x < self.bounds.max.x && self.bounds.min.y < self.bounds.max.y) {
            errs.push("bounds are empty".to_owned());
        }

        let mut seen = BTreeSet::new();
        for a in &self.agents {
            let d = a.descriptor();
            if d.kind != a.kind || d.agent_id != a.id {
                errs.push(format!("agent '{}': descriptor disagrees with id/kind", a.id));
            }
            if let Err(vs) = validate_platform(&d, &seen) {
                errs.extend(vs.iter().map(|v| format!("agent '{}': {}: {}", a.id, v.code, v.message)));
            }
            seen.insert(a.id.clone());
            errs.extend(a.battery.validate().iter().map(|v| format!("agent '{}': {}", a.id, v.message)));
            match (a.kind, a.pose) {
                (PlatformKind::Operator, _) => {}
                (_, Some(pose)) => self.check_position(&format!("agent '{}'", a.id), pose.position(), &mut errs),
                (_, None) => errs.push(format!("agent '{}' has no pose", a.id)),
            }
        }
        let mut objects = BTreeSet::new();
        for o in &self.objects {
            if !objects.insert(&o.id) {
                errs.push(format!("object '{}' declared twice", o.id));
            }
            self.check_position(&format!("object '{}'", o.id), o.pose.position(), &mut errs);
        }

        let quadrupeds = self.count(|d| d.kind == PlatformKind::Quadruped);
        let enabled = &self.governance.enabled;
        if enabled.contains(&MissionType::M1)
            && quadrupeds > 0
            && self.count(|d| matches!(d.kind, PlatformKind::Aerial | PlatformKind::Operator)) == 0
        {
            errs.push("M1 enabled but no aerial or operator to corroborate".to_owned());
        }
        for mt in [MissionType::M1, MissionType::M2] {
            if enabled.contains(&mt) && quadrupeds == 0 && self.operator.triggers.iter().any(|t| t.mission == mt) {
                errs.push(format!("{mt} is triggered but no quadruped is present"));
            }
        }
        if enabled.contains(&MissionType::M2) && self.operator.triggers.iter().any(|t| t.mission == MissionType::M2) {
            if self.governance.waypoints.is_empty() {
                errs.push("M2 is triggered but no waypoints are configured".to_owned());
            }
            if self.count(|d| matches!(d.kind, PlatformKind::FixedCamera | PlatformKind::Aerial)) == 0 {
                errs.push("M2 needs a fixed camera or aerial corroborator".to_owned());
            }
        }
        if enabled.contains(&MissionType::M3) {
            if self.count(|d| d.kind == PlatformKind::Quadruped && d.can_fetch_battery()) == 0 {
                errs.push("M3 enabled but no quadruped with a manipulator is present".to_owned());
            }
            if self.count(|d| d.battery_capable) == 0 {
                errs.push("M3 enabled but no battery-capable agent is present".to_owned());
            }
            if !self.objects.iter().any(|o| o.class == TargetClass::BatteryBox) {
                errs.push("M3 enabled but the world has no battery_box".to_owned());
            }
        }
        for wp in &self.governance.waypoints {
            self.check_position("waypoint", Point::new(wp.x, wp.y), &mut errs);
            if let Some(cam) = &wp.camera {
                if !self.agents.iter().any(|a| &a.id == cam && a.kind == PlatformKind::FixedCamera) {
                    errs.push(format!("waypoint camera '{cam}' is not a fixed camera"));
                }
            }
        }
        if let Some(f) = &self.operator.follow {
            if !self.agents.iter().any(|a| a.id == f.aerial && a.kind == PlatformKind::Aerial) {
                errs.push(format!("follow order names '{}', which is not an aerial agent", f.aerial));
            }
            if !self.agents.iter().any(|a| a.id == f.target) {
                errs.push(format!("follow target '{}' is not an agent", f.target));
            }
        }
        for d in &self.definitions {
            if let Err(e) = d.validate() {
                errs.push(format!("{:?} definition: {e}", d.mission_type));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }

    fn check_position(&self, what: &str, p: Point, errs: &mut Vec<String>) {
        if !self.bounds.contains(p) {
            errs.push(format!("{what} at ({}, {}) is outside the bounds", p.x, p.y));
        }
        if self.obstacles.iter().any(|o| o.contains_strict(p)) {
            errs.push(format!("{what} at ({}, {}) is inside an obstacle", p.x, p.y));
        }
    }

    pub fn world(&self) -> WorldState {
        let mut w = WorldState::new(self.bounds, self.tick_dt, self.seed);
        w.obstacles = self.obstacles.clone();
        w.params = self.world.clone();
        for a in &self.agents {
            if let (Some(pose), false) = (a.pose, a.kind == PlatformKind::Operator) {
                w.agents.insert(a.id.clone(), AgentBody { descriptor: a.descriptor(), pose, battery: a.battery, carrying: None });
            }
        }
        for o in &self.objects {
            w.objects.insert(o.id.clone(), WorldObject { class: o.class, pose: o.pose, carried_by: None, consumed: false });
        }
        w
    }

    pub fn controllers(&self) -> Vec<Box<dyn Controller>> {
        self.agents
            .iter()
            .map(|a| -> Box<dyn Controller> {
                let d = a.descriptor();
                match a.kind {
                    PlatformKind::Quadruped => Box::new(Quadruped::new(d)),
                    PlatformKind::Wheeled => Box::new(Wheeled::new(d, a.wheeled.clone().unwrap_or_default())),
                    PlatformKind::Aerial => Box::new(Aerial::new(d)),
                    PlatformKind::FixedCamera => Box::new(FixedCamera::new(d)),
                    PlatformKind::Operator => Box::new(Operator::new(d, self.operator.clone())),
                }
            })
            .collect()
    }

    /// Validates and wires world, hub and agents together.
    pub fn build(&self, log: EventLog) -> Result<Simulation, ScenarioError> {
        self.validate()?;
        let hub_config = HubConfig {
            seed: self.seed,
            tick_dt: self.tick_dt,
            detection_threshold: self.governance.detection_threshold,
            scenario: self.name.clone(),
            ..HubConfig::default()
        };
        let engine = Engine::new(self.governance.clone(), self.definitions());
        let hub = TwinHub::new(hub_config, engine, log);
        let header = serde_json::to_value(self).expect("scenario serializes");
        Simulation::new(self.world(), hub, self.controllers(), self.max_ticks, header)
            .map_err(|e| ScenarioError::Invalid(vec![e.to_string()]))
    }
}

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_validate() {
        for name in bundled_names() {
            let s = Scenario::load(&format!("bundled:{name}")).unwrap();
            s.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn missing_quadruped_rejected() {
        let mut s = Scenario::load("bundled:m3").unwrap();
        s.agents.retain(|a| a.kind != PlatformKind::Quadruped);
        let Err(ScenarioError::Invalid(errs)) = s.validate() else { panic!("should fail") };
        assert!(errs.iter().any(|e| e.contains("manipulator")), "{errs:?}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = bundled("m1").unwrap().replacen('{', "{\"bogus\": 1,", 1);
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Parse(_))));
    }
}
