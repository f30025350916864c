//! Timed re-emission of a verified log.
//!
//! Every log line is re-sent byte for byte, frames and C3 records alike.
//! Pacing follows the recorded ticks: a gap of `n` ticks waits
//! `n * tick_dt / speed` seconds. Speed 0 sends as fast as possible.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::SinkExt;
use thiserror::Error;
use tokio::io::{AsyncWrite, AsyncWriteExt};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::behaviors::MissionTimeline;
use crate::protocol::{EventPayload, LogRecord};
use crate::verify::{verify_path, Violation};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read log: {0}")]
    Io(#[from] std::io::Error),
    #[error("log failed verification with {} violation(s)", .0.len())]
    Rejected(Vec<Violation>),
}

/// A verified log, split into lines without terminators.
#[derive(Debug, Clone)]
pub struct Recording {
    pub lines: Vec<String>,
    ticks: Vec<u64>,
    pub tick_dt: f64,
}

impl Recording {
    /// Loads and verifies `path`; refuses logs with any violation.
    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let report = verify_path(path)?;
        if !report.passed() {
            return Err(ReplayError::Rejected(report.violations));
        }
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_text(&text))
    }

    /// No verification; the caller vouches for the text.
    pub fn from_text(text: &str) -> Self {
        let mut lines = Vec::new();
        let mut ticks = Vec::new();
        let mut tick_dt = 0.1;
        for (i, line) in text.lines().enumerate() {
            let record = serde_json::from_str::<LogRecord>(line).ok();
            if i == 0 {
                if let Some(LogRecord::Frame(f)) = &record {
                    if let Some(dt) = f.payload_as::<EventPayload>().ok().and_then(|e| e.data["tick_dt"].as_f64()) {
                        tick_dt = dt;
                    }
                }
            }
            let last = ticks.last().copied().unwrap_or(0);
            ticks.push(record.map_or(last, |r| r.tick()));
            lines.push(line.to_owned());
        }
        Self { lines, ticks, tick_dt }
    }

    /// Wait before each line at the given speed.
    pub fn delays(&self, speed: f64) -> Vec<Duration> {
        let mut prev = self.ticks.first().copied().unwrap_or(0);
        self.ticks
            .iter()
            .map(|&t| {
                let gap = t.saturating_sub(prev);
                prev = t;
                if speed > 0.0 && gap > 0 {
                    Duration::from_secs_f64(gap as f64 * self.tick_dt / speed)
                } else {
                    Duration::ZERO
                }
            })
            .collect()
    }

    /// Mission timeline an operator would build from this log.
    pub fn timeline(&self) -> MissionTimeline {
        let mut timeline = MissionTimeline::default();
        for line in &self.lines {
            if let Ok(LogRecord::Frame(f)) = serde_json::from_str::<LogRecord>(line) {
                timeline.apply(&f);
            }
        }
        timeline
    }
}

/// Writes every line, newline-terminated, with pacing.
pub async fn replay_to<W: AsyncWrite + Unpin>(rec: &Recording, speed: f64, writer: &mut W) -> std::io::Result<()> {
    for (line, delay) in rec.lines.iter().zip(rec.delays(speed)) {
        if !delay.is_zero() {
            tokio::time::sleep(delay).await;
        }
        writer.write_all(line.as_bytes()).await?;
        writer.write_all(b"\n").await?;
    }
    writer.flush().await
}

#[derive(Clone)]
struct ReplayState {
    rec: Arc<Recording>,
    speed: f64,
}

/// Serves the recording at `/ws`; every client gets a full replay from
/// the first line, one text message per line.
pub struct ReplayServer {
    pub addr: SocketAddr,
    task: JoinHandle<()>,
}

impl ReplayServer {
    pub async fn bind(addr: SocketAddr, rec: Recording, speed: f64) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let app = Router::new().route("/ws", get(upgrade)).with_state(ReplayState { rec: Arc::new(rec), speed });
        let task = tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!("replay server stopped: {e}");
            }
        });
        Ok(Self { addr, task })
    }
}

impl Drop for ReplayServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<ReplayState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| stream_to(socket, state))
}

async fn stream_to(mut socket: WebSocket, state: ReplayState) {
    for (line, delay) in state.rec.lines.iter().zip(state.rec.delays(state.speed)) {
        if !delay.is_zero() {
            tokio::time::sleep(delay).await;
        }
        if socket.send(Message::Text(line.clone().into())).await.is_err() {
            return;
        }
    }
    let _ = socket.close().await;
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG: &str = "{\"a\":1,\"tick\":0}\n{\"a\":2,\"tick\":0}\n{\"a\":3,\"tick\":10}\n";

    #[test]
    fn speed_zero_never_waits() {
        let rec = Recording::from_text(LOG);
        assert!(rec.delays(0.0).iter().all(Duration::is_zero));
    }

    #[test]
    fn pacing_scales_with_speed() {
        let mut rec = Recording::from_text(LOG);
        rec.ticks = vec![0, 0, 10];
        let d = rec.delays(2.0);
        assert_eq!(d[0], Duration::ZERO);
        assert_eq!(d[1], Duration::ZERO);
        assert!((d[2].as_secs_f64() - 0.5).abs() < 1e-9);
    }

    #[tokio::test]
    async fn writer_gets_identical_bytes() {
        let rec = Recording::from_text(LOG);
        let mut out = Vec::new();
        replay_to(&rec, 0.0, &mut out).await.unwrap();
        assert_eq!(out, LOG.as_bytes());
    }
}
