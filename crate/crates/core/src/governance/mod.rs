//! Mission state machines, corroboration bookkeeping and resilience reports.
pub mod corroboration;
pub mod engine;
pub mod mission;
pub mod report;

pub use corroboration::{CorroborationBook, CorroborationError, Resolution};
pub use engine::{Effect, Engine, GovConfig, MissionRecord, Registry, TwinAgent, Waypoint};
pub use mission::{GraphParams, MissionDefinition, MissionError, MissionEvent, Transition};
pub use report::{ReportError, ResilienceReport};
