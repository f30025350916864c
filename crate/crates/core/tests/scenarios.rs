mod common;

use common::{run_bundled, run_scenario, text};
use fleet_core::governance::ResilienceReport;
use fleet_core::protocol::{AlertPayload, EventPayload, FrameType, LogRecord};
use fleet_core::scenario::{bundled, Scenario};
use fleet_core::verify::verify_bytes;
use fleet_core::{C3Kind, MissionState, MissionType};
use serde_json::{json, Value};

fn variant(name: &str, edit: impl FnOnce(&mut Value)) -> Scenario {
    let mut v: Value = serde_json::from_str(bundled(name).unwrap()).unwrap();
    edit(&mut v);
    Scenario::parse(&v.to_string()).unwrap()
}

fn frames(log: &[u8]) -> Vec<fleet_core::protocol::Frame> {
    text(log)
        .lines()
        .filter_map(|l| match serde_json::from_str(l).unwrap() {
            LogRecord::Frame(f) => Some(f),
            LogRecord::C3(_) => None,
        })
        .collect()
}

fn final_state(run: &common::Run, t: MissionType) -> MissionState {
    run.outcome.missions.iter().find(|m| m.mission_type == t).expect("mission triggered").state
}

#[test]
fn same_seed_same_hash() {
    for name in ["m1", "m3"] {
        let a = run_bundled(name);
        let b = run_bundled(name);
        assert_eq!(a.outcome.digest, b.outcome.digest, "{name}");
        assert_eq!(a.log, b.log);
    }
}

#[test]
fn m3_alert_assist_and_placement() {
    let run = run_bundled("m3");
    assert_eq!(final_state(&run, MissionType::M3), MissionState::Completed);
    assert_eq!(run.outcome.exit_code(), 0);
    let fs = frames(&run.log);
    let alert: AlertPayload = fs.iter().find(|f| f.frame_type == FrameType::Alert).unwrap().payload_as().unwrap();
    assert!((alert.level - 0.20).abs() < 0.01, "alert at {}", alert.level);
    let placed: EventPayload = fs
        .iter()
        .filter(|f| f.frame_type == FrameType::Event)
        .filter_map(|f| f.payload_as::<EventPayload>().ok())
        .find(|e| e.name == "placed")
        .unwrap();
    let husky = run.sim.world().agents.get(&"husky".into()).unwrap().pose;
    let expected = (husky.x + 2.0 * husky.heading.cos(), husky.y + 2.0 * husky.heading.sin());
    let (x, y) = (placed.data["x"].as_f64().unwrap(), placed.data["y"].as_f64().unwrap());
    assert!(((x - expected.0).powi(2) + (y - expected.1).powi(2)).sqrt() <= 0.1);
    assert!(verify_bytes(&run.log, Some(&run.outcome.digest)).passed());
}

#[test]
fn full_run_covers_all_c3_kinds() {
    let run = run_bundled("full");
    assert_eq!(run.outcome.missions.len(), 3);
    assert_eq!(run.outcome.exit_code(), 0);
    let report = ResilienceReport::from_log(text(&run.log)).unwrap();
    for kind in C3Kind::ALL {
        assert!(report.count(kind) >= 1, "no {kind:?}");
    }
}

#[test]
fn resilience_needs_m3() {
    let with = run_bundled("m3");
    let without = run_scenario(&variant("m3", |v| v["governance"]["enabled"] = json!([])));
    let a = ResilienceReport::from_log(text(&with.log)).unwrap();
    let b = ResilienceReport::from_log(text(&without.log)).unwrap();
    assert!(a.beneficiary_downtime_ticks < b.beneficiary_downtime_ticks, "{a:?} vs {b:?}");
    assert!(a.time_to_assist_ticks.is_some());
    assert_eq!(b.time_to_assist_ticks, None);
    assert!(b.beneficiary_downtime_ticks > 0);
    assert!(without.outcome.missions.is_empty());
}

#[test]
fn silent_corroborators_leave_m1_unverified() {
    let s = variant("m1", |v| {
        v["agents"].as_array_mut().unwrap().retain(|a| a["id"] != "tello");
        v["operator"]["follow"] = Value::Null;
        v["operator"]["verdict"] = json!("ignore");
    });
    let run = run_scenario(&s);
    assert_eq!(final_state(&run, MissionType::M1), MissionState::Unverified);
    assert_eq!(run.outcome.exit_code(), 1);
    assert!(verify_bytes(&run.log, Some(&run.outcome.digest)).passed());
}

#[test]
fn denied_corroboration_aborts_m1() {
    let s = variant("m1", |v| {
        v["agents"].as_array_mut().unwrap().retain(|a| a["id"] != "tello");
        v["operator"]["follow"] = Value::Null;
        v["operator"]["verdict"] = json!("deny");
    });
    let run = run_scenario(&s);
    assert_eq!(final_state(&run, MissionType::M1), MissionState::Aborted);
    assert!(verify_bytes(&run.log, Some(&run.outcome.digest)).passed());
}

#[test]
fn unreachable_box_times_out_search() {
    let s = variant("m3", |v| v["objects"][0]["pose"] = json!({"x": 15.5, "y": 15.5, "heading": 0}));
    let run = run_scenario(&s);
    assert_eq!(final_state(&run, MissionType::M3), MissionState::Aborted);
    let statuses: Vec<_> = frames(&run.log)
        .into_iter()
        .filter(|f| f.frame_type == FrameType::MissionStatus)
        .filter_map(|f| f.payload_as::<fleet_core::protocol::StatusPayload>().ok())
        .collect();
    let last = statuses.last().unwrap();
    assert_eq!(last.event.as_deref(), Some("search_timeout"));
    assert!(verify_bytes(&run.log, Some(&run.outcome.digest)).passed());
}

#[test]
fn invalid_scenario_rejected_before_build() {
    let mut v: Value = serde_json::from_str(bundled("m3").unwrap()).unwrap();
    v["agents"].as_array_mut().unwrap().retain(|a| a["kind"] != "quadruped");
    let s = Scenario::parse(&v.to_string()).unwrap();
    assert!(s.validate().is_err());
}
