#![allow(dead_code)]

use fleet_core::hub::EventLog;
use fleet_core::scenario::Scenario;
use fleet_core::sim::{RunOutcome, Simulation};

pub struct Run {
    pub outcome: RunOutcome,
    pub sim: Simulation,
    pub log: Vec<u8>,
}

pub fn run_scenario(s: &Scenario) -> Run {
    let sim = s.build(EventLog::in_memory()).expect("scenario builds");
    let (outcome, sim) = sim.run().expect("run");
    let log = sim.hub().log().bytes().expect("in-memory log").to_vec();
    Run { outcome, sim, log }
}

pub fn run_bundled(name: &str) -> Run {
    run_scenario(&Scenario::load(&format!("bundled:{name}")).unwrap())
}

pub fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}
