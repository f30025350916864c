//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail. Every check goes through `fleet_cli::run` on the
//! bundled scenarios and inspects the written artefacts.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fleet_cli::{run, RunConfig, RunSummary};
use fleet_core::governance::{Engine, GovConfig, GraphParams, MissionDefinition, MissionError, MissionEvent};
use fleet_core::hub::{EventLog, HubConfig, Outbound, TwinHub};
use fleet_core::protocol::{decode, encode, ErrorPayload, Frame, FrameType, HelloPayload, LogRecord};
use fleet_core::verify::verify_bytes;
use fleet_core::{
    canonical_serialize, C3Kind, MissionId, MissionInstance, MissionProgress, MissionState, MissionType, PlatformDescriptor, PlatformKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Check = Result<String, String>;

struct Ctx {
    dir: tempfile::TempDir,
    clean_logs: Vec<PathBuf>,
}

impl Ctx {
    fn run(&mut self, scenario: &str, tag: &str, edit: impl FnOnce(&mut RunConfig)) -> Result<RunSummary, String> {
        let mut cfg = RunConfig::new(scenario);
        cfg.seed = Some(42);
        cfg.log = Some(self.dir.path().join(format!("{tag}.jsonl")));
        edit(&mut cfg);
        let summary = run(&cfg).map_err(|e| format!("{tag}: {e}"))?;
        if summary.exit_code() == 0 {
            self.clean_logs.push(summary.log.clone());
        }
        Ok(summary)
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn records(path: &Path) -> Vec<LogRecord> {
    std::fs::read_to_string(path).expect("log readable").lines().map(|l| serde_json::from_str(l).expect("log line parses")).collect()
}

fn frames(recs: &[LogRecord]) -> impl Iterator<Item = (usize, &Frame)> {
    recs.iter().enumerate().filter_map(|(i, r)| match r {
        LogRecord::Frame(f) => Some((i, f)),
        LogRecord::C3(_) => None,
    })
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or(f64::NAN)
}

// ---- criteria --------------------------------------------------------------

fn m3_end_to_end(ctx: &mut Ctx) -> Check {
    let start = Instant::now();
    let s = ctx.run("bundled:m3", "m3", |c| c.deterministic = true)?;
    let elapsed = start.elapsed();
    ensure(s.exit_code() == 0, format!("exit {}", s.exit_code()))?;
    let m3 = s.outcome.missions.iter().find(|m| m.mission_type == MissionType::M3).ok_or("M3 never triggered")?;
    ensure(m3.state == MissionState::Completed, format!("M3 ended {}", m3.state))?;

    let recs = records(&s.log);
    let alert = frames(&recs).find(|(_, f)| f.frame_type == FrameType::Alert).ok_or("no ALERT")?.1;
    let level = num(&alert.payload, "level");
    ensure((level - 0.20).abs() <= 0.005, format!("alert at level {level}"))?;

    // placement against the beneficiary's last reported pose
    let mut husky = None;
    let mut placement_err = None;
    for (_, f) in frames(&recs) {
        if f.frame_type == FrameType::Telemetry && f.src == "husky" {
            husky = Some(f.payload["pose"].clone());
        }
        if f.frame_type == FrameType::Event && f.payload["name"] == "placed" {
            let p = husky.as_ref().ok_or("placement before any husky telemetry")?;
            let h = num(p, "heading");
            let (ex, ey) = (num(p, "x") + 2.0 * h.cos(), num(p, "y") + 2.0 * h.sin());
            let d = &f.payload["data"];
            placement_err = Some(((num(d, "x") - ex).powi(2) + (num(d, "y") - ey).powi(2)).sqrt());
        }
    }
    let placement_err = placement_err.ok_or("no placed event")?;
    ensure(placement_err <= 0.1, format!("box {placement_err:.3} m from target"))?;

    // every approach transition needs a qualifying detection since the search began
    let mut search_start = 0;
    let mut gated = 0;
    for (i, f) in frames(&recs) {
        if f.frame_type != FrameType::MissionStatus {
            continue;
        }
        let state = f.payload["state"].as_str().unwrap_or_default();
        let (class, executor) = match state {
            "SearchBattery" | "SearchPartner" => {
                search_start = i;
                continue;
            }
            "ApproachBox" => ("battery_box", &f.payload["participants"][0]),
            "ApproachPartner" => ("wheeled_platform", &f.payload["participants"][0]),
            _ => continue,
        };
        let ok = recs[search_start..i].iter().any(|r| match r {
            LogRecord::Frame(d) => {
                d.frame_type == FrameType::Detection
                    && d.src.as_str() == executor.as_str().unwrap_or_default()
                    && d.payload["detection"]["target_class"] == class
                    && num(&d.payload["detection"], "confidence") >= 0.60
            }
            LogRecord::C3(_) => false,
        });
        ensure(ok, format!("line {i}: {state} without a detection >= 0.60"))?;
        gated += 1;
    }
    ensure(gated >= 2, format!("only {gated} approach transitions"))?;
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("alert {level:.4}, placement error {placement_err:.3} m, {gated} gated approaches, {:.2}s", elapsed.as_secs_f64()))
}

fn m1_geometry(ctx: &mut Ctx) -> Check {
    let s = ctx.run("bundled:m1", "m1", |_| {})?;
    ensure(s.exit_code() == 0, format!("exit {}", s.exit_code()))?;
    let recs = records(&s.log);

    let (cmd_line, trace) =
        frames(&recs).find(|(_, f)| f.frame_type == FrameType::Command && f.payload["verb"] == "trace").ok_or("no trace command")?;
    let args = &trace.payload["args"];
    ensure(num(args, "radius") == 1.0 && num(args, "side") == 1.0, "trace not commanded at 1 m")?;
    let (cx, cy) = (num(&args["arm_center"], "x"), num(&args["arm_center"], "y"));

    let origin = frames(&recs[..cmd_line])
        .filter(|(_, f)| f.frame_type == FrameType::Telemetry && f.src == trace.dst)
        .last()
        .ok_or("no pose before trace")?
        .1
        .payload["pose"]
        .clone();
    let (ox, oy, h) = (num(&origin, "x"), num(&origin, "y"), num(&origin, "heading"));
    let ideal: Vec<(f64, f64)> = [(1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]
        .iter()
        .map(|(u, v)| (ox + u * h.cos() - v * h.sin(), oy + u * h.sin() + v * h.cos()))
        .collect();

    let mut samples = 0;
    let mut worst_radial: f64 = 0.0;
    let mut reached = Vec::new();
    for (_, f) in frames(&recs[cmd_line..]).filter(|(_, f)| f.src == trace.dst) {
        if f.frame_type == FrameType::Telemetry {
            for p in f.payload["arm"].as_array().into_iter().flatten() {
                samples += 1;
                let r = ((num(p, "x") - cx).powi(2) + (num(p, "y") - cy).powi(2)).sqrt();
                worst_radial = worst_radial.max((r - 1.0).abs());
            }
        }
        if f.frame_type == FrameType::Event && f.payload["name"] == "corner_reached" {
            reached.push((num(&f.payload["data"], "x"), num(&f.payload["data"], "y")));
        }
    }
    ensure(samples > 0, "no arm samples")?;
    ensure(worst_radial <= 0.05, format!("arm sample {worst_radial:.3} m off the circle"))?;
    ensure(reached.len() == 4, format!("{} corners reached", reached.len()))?;
    let worst_corner = reached.iter().zip(&ideal).map(|(a, b)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).fold(0.0, f64::max);
    ensure(worst_corner <= 0.05, format!("corner {worst_corner:.3} m off"))?;
    Ok(format!("{samples} arm samples, max radial error {worst_radial:.2e} m, max corner error {worst_corner:.2e} m"))
}

fn c3_coverage(ctx: &mut Ctx) -> Check {
    let s = ctx.run("bundled:full", "full", |_| {})?;
    let triggered: BTreeSet<_> = s.outcome.missions.iter().map(|m| m.mission_type).collect();
    ensure(triggered.len() == 3, format!("triggered {triggered:?}"))?;
    let mut counted = [0u64; 3];
    for r in records(&s.log) {
        if let LogRecord::C3(e) = r {
            counted[C3Kind::ALL.iter().position(|k| *k == e.kind).expect("known kind")] += 1;
        }
    }
    for (k, n) in C3Kind::ALL.iter().zip(counted) {
        ensure(n >= 1, format!("no {k:?} events"))?;
        ensure(s.report.count(*k) == n, format!("report disagrees on {k:?}"))?;
    }
    let parts: Vec<String> = C3Kind::ALL.iter().zip(counted).map(|(k, n)| format!("{k:?} {n}")).collect();
    Ok(parts.join(", "))
}

fn resilience(ctx: &mut Ctx) -> Check {
    let with = ctx.run("bundled:m3", "res-on", |_| {})?;
    let without = ctx.run("bundled:m3", "res-off", |c| c.disable = vec![MissionType::M3])?;
    let (a, b) = (with.report.beneficiary_downtime_ticks, without.report.beneficiary_downtime_ticks);
    ensure(a < b, format!("downtime {a} with M3 vs {b} without"))?;
    let tta = with.report.time_to_assist_ticks.ok_or("time-to-assist not finite")?;
    Ok(format!("downtime {a} ticks with M3, {b} without; time-to-assist {tta} ticks"))
}

fn mutate(log: &Path, dir: &Path, tag: &str, f: impl FnOnce(&mut Vec<String>)) -> (Vec<u8>, String) {
    let mut lines: Vec<String> = std::fs::read_to_string(log).unwrap().lines().map(str::to_owned).collect();
    f(&mut lines);
    let bytes: Vec<u8> = lines.iter().flat_map(|l| format!("{l}\n").into_bytes()).collect();
    let path = dir.join(format!("{tag}.jsonl"));
    std::fs::write(&path, &bytes).unwrap();
    (bytes.clone(), fleet_core::hub::log::sha256_hex(&bytes))
}

fn determinism(ctx: &mut Ctx) -> Check {
    let a = ctx.run("bundled:m3", "det-a", |_| {})?;
    let b = ctx.run("bundled:m3", "det-b", |_| {})?;
    let sidecar = |p: &Path| std::fs::read_to_string(fleet_core::hub::log::sidecar_path(p)).unwrap();
    ensure(a.outcome.digest == b.outcome.digest, "digests differ")?;
    ensure(sidecar(&a.log) == sidecar(&b.log), "side-cars differ")?;

    for log in &ctx.clean_logs {
        let report = fleet_cli::verify(log).map_err(|e| e.to_string())?;
        if let Some(v) = report.violations.first() {
            return Err(format!("{} fails verify: {v}", log.display()));
        }
    }

    let dir = ctx.dir.path();
    // re-sealed, so only the gate can object
    let (gate, gate_hash) = mutate(&a.log, dir, "mut-gate", |lines| {
        for l in lines.iter_mut() {
            let Ok(LogRecord::Frame(mut f)) = serde_json::from_str::<LogRecord>(l) else { continue };
            if f.frame_type == FrameType::Detection && num(&f.payload["detection"], "confidence") >= 0.60 {
                f.payload["detection"]["confidence"] = json!(0.55);
                *l = String::from_utf8(canonical_serialize(&LogRecord::Frame(f)).unwrap()).unwrap();
            }
        }
    });
    let (gap, gap_hash) = mutate(&a.log, dir, "mut-gap", |lines| {
        let i = lines.iter().position(|l| l.contains("\"type\":\"TELEMETRY\"")).unwrap();
        lines.remove(i);
    });
    let full = std::fs::read(&a.log).unwrap();
    let cut = full[..full.len() * 2 / 3].to_vec();

    let cases = [
        ("threshold gate", verify_bytes(&gate, Some(&gate_hash))),
        ("seq gap", verify_bytes(&gap, Some(&gap_hash))),
        ("truncated", verify_bytes(&cut, Some(&a.outcome.digest))),
    ];
    for (rule, report) in &cases {
        ensure(report.has_rule(rule), format!("mutation not flagged as {rule}: {:?}", report.violations))?;
    }
    ensure(cases[2].1.has_rule("hash"), "truncation kept the hash")?;
    Ok(format!("digest {}…, {} clean logs verified, 3/3 mutations flagged", &a.outcome.digest[..12], ctx.clean_logs.len()))
}

fn random_value(rng: &mut ChaCha8Rng, depth: u32) -> Value {
    match rng.random_range(0..if depth == 0 { 5 } else { 7 }) {
        0 => Value::Null,
        1 => Value::Bool(rng.random()),
        2 => json!(rng.random::<i64>()),
        3 => {
            let f = f64::from_bits(rng.random::<u64>());
            if f.is_finite() {
                json!(f)
            } else {
                json!(rng.random::<f64>())
            }
        }
        4 => {
            let n = rng.random_range(0..10);
            Value::String((0..n).map(|_| char::from_u32(rng.random_range(0x20..0x2FFF)).unwrap_or('?')).collect())
        }
        5 => Value::Array((0..rng.random_range(0..4)).map(|_| random_value(rng, depth - 1)).collect()),
        _ => random_object(rng, depth - 1),
    }
}

fn random_object(rng: &mut ChaCha8Rng, depth: u32) -> Value {
    Value::Object((0..rng.random_range(0..5)).map(|i| (format!("k{}_{i}", rng.random_range(0..100)), random_value(rng, depth))).collect())
}

fn protocol() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 0..10_000 {
        let t = FrameType::ALL[rng.random_range(0..FrameType::ALL.len())];
        let mut f = Frame::new(t, rng.random_range(1..u64::MAX), rng.random(), format!("a{}", rng.random_range(0..50)), "hub", &json!({}));
        f.payload = random_object(&mut rng, 3);
        let bytes = encode(&f).map_err(|e| format!("frame {n}: {e}"))?;
        let back = decode(&bytes).map_err(|e| format!("frame {n}: {e}"))?;
        ensure(back == f && encode(&back).unwrap() == bytes, format!("frame {n} changed in transit"))?;
    }

    let mut hub = TwinHub::new(HubConfig::default(), Engine::with_defaults(GovConfig::default()), EventLog::in_memory());
    let conn = hub.connect();
    let desc = PlatformDescriptor::standard("husky", PlatformKind::Wheeled);
    hub.receive(conn, Frame::new(FrameType::Hello, 1, 0, "husky", "hub", &HelloPayload { descriptor: desc })).unwrap();
    hub.take_outbound();
    hub.receive(conn, Frame::new(FrameType::Event, 3, 0, "husky", "hub", &json!({"name": "x", "data": {}}))).unwrap();
    let out = hub.take_outbound();
    let error = out.iter().find_map(|o| match o {
        Outbound::Deliver { conn: c, frame } if *c == conn && frame.frame_type == FrameType::Error => {
            frame.payload_as::<ErrorPayload>().ok()
        }
        _ => None,
    });
    ensure(error.is_some_and(|e| e.code == "sequence violation"), "no sequence ERROR")?;
    ensure(out.contains(&Outbound::Close { conn }) && hub.sessions().is_empty(), "session left open")?;
    Ok("10000/10000 frames byte-identical; seq gap closed the session with ERROR".into())
}

fn state_machines(ctx: &mut Ctx) -> Check {
    let defs = MissionDefinition::defaults(&GraphParams::default());
    let fresh = |t| {
        MissionInstance::new(
            MissionId::new("x"),
            t,
            vec![],
            MissionProgress { grasp_retry_cap: 3, waypoint_count: 3, ..Default::default() },
            0,
            "",
        )
    };
    let (mut defined, mut undefined) = (0, 0);
    for def in defs.values() {
        let mut covered = BTreeSet::new();
        for state in def.states().into_iter().filter(|s| !s.is_terminal()) {
            let path = def.path_to(state).ok_or(format!("{state} unreachable"))?;
            for event in MissionEvent::ALL {
                let mut m = fresh(def.mission_type);
                for e in &path {
                    m.advance(def, *e, 0, "").map_err(|e| e.to_string())?;
                }
                match (def.successor(state, event), m.advance(def, event, 1, "")) {
                    (Some(to), Ok(tr)) if tr.to == to => {
                        covered.insert((state, event));
                        defined += 1;
                    }
                    (None, Err(MissionError::ProtocolViolation { .. }))
                        if m.state == MissionState::Aborted && m.history.last().unwrap().cause.starts_with("protocol_violation") =>
                    {
                        undefined += 1
                    }
                    (want, got) => return Err(format!("{:?} {state} + {event}: want {want:?}, got {got:?}", def.mission_type)),
                }
            }
        }
        ensure(covered.len() == def.transitions.len(), format!("{:?}: untaken transitions", def.mission_type))?;
    }

    let scenario = ctx.dir.path().join("m1-silent.json");
    let mut v: Value = serde_json::from_str(fleet_core::scenario::bundled("m1").unwrap()).unwrap();
    v["agents"].as_array_mut().unwrap().retain(|a| a["kind"] != "aerial");
    v["operator"]["follow"] = Value::Null;
    v["operator"]["verdict"] = json!("ignore");
    std::fs::write(&scenario, v.to_string()).unwrap();
    let s = ctx.run(scenario.to_str().unwrap(), "m1-silent", |_| {})?;
    let end = s.outcome.missions.first().map(|m| m.state);
    ensure(end == Some(MissionState::Unverified), format!("silent corroborators ended {end:?}"))?;
    ensure(s.exit_code() == 1, "Unverified run must exit 1")?;
    let report = fleet_cli::verify(&s.log).map_err(|e| e.to_string())?;
    ensure(report.passed(), "Unverified log fails verify")?;
    Ok(format!("{defined} defined transitions taken, {undefined} undefined pairs abort; Unverified reached by timeout"))
}

fn main() {
    let mut ctx = Ctx { dir: tempfile::tempdir().expect("temp dir"), clean_logs: Vec::new() };
    let results: Vec<(&str, Check)> = vec![
        ("M3 end-to-end", m3_end_to_end(&mut ctx)),
        ("M1 geometry", m1_geometry(&mut ctx)),
        ("C3 coverage", c3_coverage(&mut ctx)),
        ("Resilience comparison", resilience(&mut ctx)),
        ("Determinism", determinism(&mut ctx)),
        ("Protocol", protocol()),
        ("State machines", state_machines(&mut ctx)),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {}/{} passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
