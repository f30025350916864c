//! Resilience report: a pure function of an event log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, C3Kind, MissionId, MissionState};
use crate::protocol::{EventPayload, FrameType, LogRecord, StatusPayload};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ReportError {
    /// Zero-based line offset of the bad record.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeneficiaryRecord {
    pub alert_tick: Option<u64>,
    pub placed_tick: Option<u64>,
    pub time_to_assist_ticks: Option<u64>,
    /// Ticks spent immobilized, summed over every interval.
    pub downtime_ticks: u64,
    pub immobilized_intervals: Vec<(u64, Option<u64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub run_ticks: u64,
    pub missions_triggered: u64,
    /// Final state per mission, tallied. Non-terminal finals count too.
    pub final_states: BTreeMap<MissionState, u64>,
    pub beneficiary_downtime_ticks: u64,
    /// Slowest assist over all alerts; `None` when any alert went unassisted.
    pub time_to_assist_ticks: Option<u64>,
    pub beneficiaries: BTreeMap<AgentId, BeneficiaryRecord>,
    pub c3_counts: BTreeMap<C3Kind, u64>,
}

impl ResilienceReport {
    pub fn from_log(text: &str) -> Result<Self, ReportError> {
        let mut run_ticks = 0;
        let mut last_state: BTreeMap<MissionId, MissionState> = BTreeMap::new();
        let mut ben: BTreeMap<AgentId, BeneficiaryRecord> = BTreeMap::new();
        let mut open_down: BTreeMap<AgentId, u64> = BTreeMap::new();
        let mut c3_counts: BTreeMap<C3Kind, u64> = C3Kind::ALL.into_iter().map(|k| (k, 0)).collect();

        for (line, raw) in text.lines().enumerate() {
            if raw.is_empty() {
                continue;
            }
            let record: LogRecord =
                serde_json::from_str(raw).map_err(|e| ReportError { line, message: format!("malformed record: {e}") })?;
            run_ticks = run_ticks.max(record.tick());
            let frame = match record {
                LogRecord::C3(ev) => {
                    *c3_counts.entry(ev.kind).or_default() += 1;
                    continue;
                }
                LogRecord::Frame(f) => f,
            };
            let bad = |e: serde_json::Error| ReportError { line, message: format!("bad {} payload: {e}", frame.frame_type) };
            match frame.frame_type {
                FrameType::MissionStatus => {
                    let s: StatusPayload = frame.payload_as().map_err(bad)?;
                    last_state.insert(s.mission_id, s.state);
                }
                FrameType::Alert => {
                    let rec = ben.entry(frame.src.clone()).or_default();
                    rec.alert_tick.get_or_insert(frame.tick);
                }
                FrameType::Event => {
                    let ev: EventPayload = frame.payload_as().map_err(bad)?;
                    match ev.name.as_str() {
                        "immobilized" => {
                            ben.entry(frame.src.clone()).or_default();
                            open_down.entry(frame.src.clone()).or_insert(frame.tick);
                        }
                        "swap_complete" => {
                            if let Some(start) = open_down.remove(&frame.src) {
                                let rec = ben.entry(frame.src.clone()).or_default();
                                rec.immobilized_intervals.push((start, Some(frame.tick)));
                                rec.downtime_ticks += frame.tick - start;
                            }
                        }
                        "placed" => {
                            let Some(b) = ev.data.get("beneficiary").and_then(|v| v.as_str()) else { continue };
                            let rec = ben.entry(AgentId::new(b)).or_default();
                            if rec.placed_tick.is_none() {
                                rec.placed_tick = Some(frame.tick);
                            }
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
        }

        for (agent, start) in open_down {
            let rec = ben.entry(agent).or_default();
            rec.immobilized_intervals.push((start, None));
            rec.downtime_ticks += run_ticks.saturating_sub(start);
        }
        let mut assist = Some(0);
        for rec in ben.values_mut() {
            rec.time_to_assist_ticks = match (rec.alert_tick, rec.placed_tick) {
                (Some(a), Some(p)) if p >= a => Some(p - a),
                _ => None,
            };
            if rec.alert_tick.is_some() {
                assist = match (assist, rec.time_to_assist_ticks) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    _ => None,
                };
            }
        }
        if !ben.values().any(|r| r.alert_tick.is_some()) {
            assist = None;
        }

        let mut final_states = BTreeMap::new();
        for s in last_state.values() {
            *final_states.entry(*s).or_default() += 1;
        }
        Ok(Self {
            run_ticks,
            missions_triggered: last_state.len() as u64,
            final_states,
            beneficiary_downtime_ticks: ben.values().map(|r| r.downtime_ticks).sum(),
            time_to_assist_ticks: assist,
            beneficiaries: ben,
            c3_counts,
        })
    }

    pub fn count(&self, kind: C3Kind) -> u64 {
        self.c3_counts.get(&kind).copied().unwrap_or(0)
    }
}
