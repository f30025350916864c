//! Network transports: newline-delimited frames over TCP for agents, the
//! same frames over a websocket at `/ws`, and `GET /snapshot`.
//!
//! Socket tasks never touch hub state. They push [`NetEvent`]s into one
//! ordered queue which the tick loop drains.

use std::collections::BTreeMap;
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use super::{ConnId, Outbound, Snapshot};
use crate::canonical::canonical_string;
use crate::protocol::{decode, Frame};

/// Something that happened on a connection.
#[derive(Debug)]
pub enum NetEvent {
    Connected { conn: ConnId, tx: mpsc::UnboundedSender<Frame> },
    Frame { conn: ConnId, frame: Frame },
    Malformed { conn: ConnId, error: String },
    Closed { conn: ConnId },
}

/// Input for the hub from a remote connection.
#[derive(Debug, Clone, PartialEq)]
pub enum External {
    Frame(Frame),
    Malformed(String),
    Closed,
}

#[derive(Clone)]
struct AppState {
    inbound: mpsc::UnboundedSender<NetEvent>,
    conn_ids: Arc<AtomicU64>,
    snapshot: Arc<RwLock<String>>,
}

pub struct NetServer {
    pub tcp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    inbound: mpsc::UnboundedReceiver<NetEvent>,
    writers: BTreeMap<ConnId, mpsc::UnboundedSender<Frame>>,
    snapshot: Arc<RwLock<String>>,
    tasks: Vec<JoinHandle<()>>,
}

fn next_conn(ids: &AtomicU64) -> ConnId {
    ids.fetch_add(1, Ordering::Relaxed) + 1
}

impl NetServer {
    /// Binds both listeners. Connection ids come from `conn_ids` so they
    /// never collide with in-process agents.
    pub async fn bind(tcp: SocketAddr, http: SocketAddr, conn_ids: Arc<AtomicU64>) -> io::Result<Self> {
        let (tx, rx) = mpsc::unbounded_channel();
        let empty = canonical_string(&Snapshot::empty()).expect("empty snapshot serializes");
        let snapshot = Arc::new(RwLock::new(empty));
        let tcp_listener = TcpListener::bind(tcp).await?;
        let http_listener = TcpListener::bind(http).await?;
        let tcp_addr = tcp_listener.local_addr()?;
        let http_addr = http_listener.local_addr()?;

        let state = AppState { inbound: tx, conn_ids, snapshot: Arc::clone(&snapshot) };
        let accept_state = state.clone();
        let accept = tokio::spawn(async move {
            while let Ok((stream, peer)) = tcp_listener.accept().await {
                let conn = next_conn(&accept_state.conn_ids);
                tracing::debug!(conn, %peer, "tcp connection");
                tokio::spawn(serve_stream(conn, stream, accept_state.inbound.clone()));
            }
        });
        let app = Router::new().route("/snapshot", get(get_snapshot)).route("/ws", get(upgrade)).with_state(state);
        let http = tokio::spawn(async move {
            if let Err(e) = axum::serve(http_listener, app).await {
                tracing::error!("http server stopped: {e}");
            }
        });
        Ok(Self { tcp_addr, http_addr, inbound: rx, writers: BTreeMap::new(), snapshot, tasks: vec![accept, http] })
    }

    /// Everything queued since the last call, in arrival order.
    pub fn drain(&mut self) -> Vec<(ConnId, External)> {
        let mut out = Vec::new();
        while let Ok(ev) = self.inbound.try_recv() {
            match ev {
                NetEvent::Connected { conn, tx } => {
                    self.writers.insert(conn, tx);
                }
                NetEvent::Frame { conn, frame } => out.push((conn, External::Frame(frame))),
                NetEvent::Malformed { conn, error } => out.push((conn, External::Malformed(error))),
                NetEvent::Closed { conn } => {
                    self.writers.remove(&conn);
                    out.push((conn, External::Closed));
                }
            }
        }
        out
    }

    /// True when `conn` belongs to this server.
    pub fn owns(&self, conn: ConnId) -> bool {
        self.writers.contains_key(&conn)
    }

    pub fn dispatch(&mut self, outbound: Outbound) {
        match outbound {
            Outbound::Deliver { conn, frame } => {
                if let Some(tx) = self.writers.get(&conn) {
                    let _ = tx.send(frame);
                }
            }
            Outbound::Close { conn } => {
                self.writers.remove(&conn);
            }
        }
    }

    pub fn publish(&self, snapshot: &Snapshot) {
        match canonical_string(snapshot) {
            Ok(s) => *self.snapshot.write().expect("snapshot lock") = s,
            Err(e) => tracing::error!("snapshot not serializable: {e}"),
        }
    }
}

impl Drop for NetServer {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

async fn serve_stream(conn: ConnId, stream: TcpStream, inbound: mpsc::UnboundedSender<NetEvent>) {
    let (read, mut write) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Frame>();
    if inbound.send(NetEvent::Connected { conn, tx }).is_err() {
        return;
    }
    tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            let Ok(line) = frame.to_line() else { continue };
            if write.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
        let _ = write.shutdown().await;
    });
    let mut reader = BufReader::new(read);
    let mut line = Vec::new();
    loop {
        line.clear();
        match reader.read_until(b'\n', &mut line).await {
            Ok(0) | Err(_) => break,
            Ok(_) => {
                let ev = match decode(&line) {
                    Ok(frame) => NetEvent::Frame { conn, frame },
                    Err(e) => NetEvent::Malformed { conn, error: e.to_string() },
                };
                if inbound.send(ev).is_err() {
                    return;
                }
            }
        }
    }
    let _ = inbound.send(NetEvent::Closed { conn });
}

async fn get_snapshot(State(state): State<AppState>) -> impl IntoResponse {
    let body = state.snapshot.read().expect("snapshot lock").clone();
    ([(header::CONTENT_TYPE, "application/json")], body)
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    let conn = next_conn(&state.conn_ids);
    ws.on_upgrade(move |socket| serve_ws(conn, socket, state.inbound))
}

/// One frame per text message; the trailing newline is optional inbound and
/// omitted outbound.
async fn serve_ws(conn: ConnId, socket: WebSocket, inbound: mpsc::UnboundedSender<NetEvent>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Frame>();
    if inbound.send(NetEvent::Connected { conn, tx }).is_err() {
        return;
    }
    tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            let Ok(line) = frame.to_line() else { continue };
            if sink.send(Message::Text(line.trim_end().to_owned().into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let mut bytes = text.into_bytes();
        if bytes.last() != Some(&b'\n') {
            bytes.push(b'\n');
        }
        let ev = match decode(&bytes) {
            Ok(frame) => NetEvent::Frame { conn, frame },
            Err(e) => NetEvent::Malformed { conn, error: e.to_string() },
        };
        if inbound.send(ev).is_err() {
            return;
        }
    }
    let _ = inbound.send(NetEvent::Closed { conn });
}
