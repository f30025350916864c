//! Deterministic multi-robot fleet simulator and digital-twin hub.
//!
//! The crate is organised bottom-up: [`model`] and [`geometry`] hold the
//! shared types, [`world`] and [`planner`] the simulation, [`governance`]
//! the mission state machines, and [`hub`] the routing service that ties
//! agents, governance and the event log together.

pub mod behaviors;
pub mod canonical;
pub mod geometry;
pub mod governance;
pub mod hub;
pub mod model;
pub mod planner;
pub mod protocol;
pub mod replay;
pub mod scenario;
pub mod sim;
pub mod verify;
pub mod world;

pub use canonical::{canonical_deserialize, canonical_serialize, canonical_string, CanonicalError};
pub use geometry::{trace_circle, trace_square, Point, Pose2D, Rect};
pub use model::*;
pub use planner::{plan_path, PlanError};
pub use world::{WorldCommand, WorldError, WorldState};
