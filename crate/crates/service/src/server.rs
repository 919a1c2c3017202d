//! Real-time session server.
//!
//! Three contexts share no mutable state:
//! - the simulation thread owns the [`SessionEngine`] and steps it against a
//!   monotonic clock;
//! - a per-connection reader decodes frames into a bounded command queue;
//! - a per-connection writer forwards events and the newest state snapshot.
//!
//! The simulation thread never waits on the network. State goes through a
//! watch channel, so a slow client only ever sees the latest snapshot.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self as std_mpsc, RecvTimeoutError, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{CloseFrame, Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::sync::{mpsc, watch};

use ringwire_core::experiment::ExperimentError;
use ringwire_core::geometry::PathExport;

use crate::protocol::{decode, encode, ClientMessage, ErrorCode, ErrorMessage, ServerMessage, StateUpdate};
use crate::session::{SessionEngine, SessionSettings};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_PUBLISH_HZ: f64 = 60.0;
pub const PATH_EXPORT_SAMPLES: usize = 512;
pub const SHUTDOWN_REASON: &str = "server shutdown";

const COMMAND_QUEUE: usize = 1024;
const EVENT_QUEUE: usize = 256;

pub const CLOSE_PROTOCOL_ERROR: u16 = 1002;
pub const CLOSE_UNSUPPORTED_DATA: u16 = 1003;
pub const CLOSE_INTERNAL_ERROR: u16 = 1011;
pub const CLOSE_TRY_AGAIN_LATER: u16 = 1013;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Session(#[from] ExperimentError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("invalid publish rate {0}")]
    PublishRate(f64),
}

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub session: SessionSettings,
    pub publish_hz: f64,
}

/// Step count owed at a given wall time.
#[derive(Clone, Copy, Debug)]
pub struct Pacer {
    start: Instant,
    dt: f64,
}

impl Pacer {
    pub fn new(start: Instant, dt: f64) -> Self {
        Self { start, dt }
    }

    pub fn due(&self, now: Instant) -> u64 {
        (now.saturating_duration_since(self.start).as_secs_f64() / self.dt).floor() as u64
    }

    /// Wall time at which step `n` becomes due.
    pub fn deadline(&self, n: u64) -> Instant {
        self.start + Duration::from_secs_f64(n as f64 * self.dt)
    }
}

enum Inbound {
    Connect { id: u64, events: mpsc::Sender<Outbound> },
    Message { id: u64, message: ClientMessage },
    Disconnect { id: u64 },
    Shutdown,
}

enum Outbound {
    Message(ServerMessage),
    Close { code: u16, reason: String },
}

fn simulation_loop(
    mut engine: SessionEngine,
    inbound: std_mpsc::Receiver<Inbound>,
    state: watch::Sender<Arc<StateUpdate>>,
    publish_hz: f64,
) {
    let pacer = Pacer::new(Instant::now(), engine.dt());
    let period = Duration::from_secs_f64(1.0 / publish_hz);
    let mut next_publish = Instant::now();
    let mut done = pacer.due(Instant::now());
    let mut client: Option<(u64, mpsc::Sender<Outbound>)> = None;

    let forward = |client: &Option<(u64, mpsc::Sender<Outbound>)>, events: Vec<ServerMessage>| {
        if let Some((_, tx)) = client {
            for e in events {
                if tx.try_send(Outbound::Message(e)).is_err() {
                    log::warn!("client event queue full, event dropped");
                }
            }
        }
    };

    loop {
        let now = Instant::now();
        let wake = pacer.deadline(done + 1).min(next_publish);
        let message = match inbound.recv_timeout(wake.saturating_duration_since(now)) {
            Ok(m) => Some(m),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => Some(Inbound::Shutdown),
        };
        match message {
            Some(Inbound::Connect { id, events }) => {
                let _ = events.try_send(Outbound::Message(ServerMessage::Session(engine.info())));
                client = Some((id, events));
            }
            Some(Inbound::Message { id, message }) => {
                if client.as_ref().is_some_and(|(c, _)| *c == id) {
                    let events = engine.handle(message);
                    forward(&client, events);
                }
            }
            Some(Inbound::Disconnect { id }) => {
                if client.as_ref().is_some_and(|(c, _)| *c == id) {
                    engine.disconnect();
                    client = None;
                }
            }
            Some(Inbound::Shutdown) => {
                let events = engine.stop(SHUTDOWN_REASON);
                forward(&client, events);
                return;
            }
            None => {}
        }

        let now = Instant::now();
        let due = pacer.due(now);
        while done < due {
            let events = engine.tick();
            forward(&client, events);
            done += 1;
        }
        if now >= next_publish {
            state.send_replace(Arc::new(engine.state()));
            next_publish += period;
            if next_publish < now {
                next_publish = now + period;
            }
        }
    }
}

#[derive(Clone)]
struct AppState {
    inbound: SyncSender<Inbound>,
    state: watch::Receiver<Arc<StateUpdate>>,
    busy: Arc<AtomicBool>,
    next_id: Arc<AtomicU64>,
    path: Arc<PathExport>,
}

/// A running server. Dropping it leaves the server running; call
/// [`shutdown`](Self::shutdown) to stop it.
pub struct RunningServer {
    addr: SocketAddr,
    inbound: SyncSender<Inbound>,
    sim: Option<thread::JoinHandle<()>>,
    http: tokio::task::JoinHandle<()>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Abort and log any running trial, then stop.
    pub async fn shutdown(mut self) {
        let inbound = self.inbound.clone();
        let sim = self.sim.take();
        let _ = tokio::task::spawn_blocking(move || {
            let _ = inbound.send(Inbound::Shutdown);
            if let Some(h) = sim {
                let _ = h.join();
            }
        })
        .await;
        self.http.abort();
    }
}

/// Bind, start the simulation thread and serve `/ws` and `/path.json`.
pub async fn start(cfg: ServeConfig) -> Result<RunningServer, ServeError> {
    if !(cfg.publish_hz.is_finite() && cfg.publish_hz > 0.0) {
        return Err(ServeError::PublishRate(cfg.publish_hz));
    }
    let engine = SessionEngine::new(cfg.session)?;
    let path = Arc::new(engine.path().export(PATH_EXPORT_SAMPLES));
    let (state_tx, state_rx) = watch::channel(Arc::new(engine.state()));
    let (in_tx, in_rx) = std_mpsc::sync_channel(COMMAND_QUEUE);

    let listener = tokio::net::TcpListener::bind(cfg.addr)
        .await
        .map_err(|source| ServeError::Bind { addr: cfg.addr, source })?;
    let addr = listener.local_addr().map_err(|source| ServeError::Bind { addr: cfg.addr, source })?;

    let publish_hz = cfg.publish_hz;
    let sim = thread::Builder::new()
        .name("ringwire-sim".into())
        .spawn(move || simulation_loop(engine, in_rx, state_tx, publish_hz))
        .expect("spawn simulation thread");

    let app = AppState {
        inbound: in_tx.clone(),
        state: state_rx,
        busy: Arc::new(AtomicBool::new(false)),
        next_id: Arc::new(AtomicU64::new(1)),
        path,
    };
    let router = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/path.json", get(path_json))
        .with_state(app);
    let http = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            log::error!("http server stopped: {e}");
        }
    });
    log::info!("listening on {addr}");
    Ok(RunningServer { addr, inbound: in_tx, sim: Some(sim), http })
}

async fn path_json(State(app): State<AppState>) -> Json<PathExport> {
    Json((*app.path).clone())
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(app): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| trainee_socket(socket, app)).into_response()
}

fn close(code: u16, reason: &str) -> WsMessage {
    let mut reason = reason.to_string();
    // Close reasons are limited to 123 bytes.
    while reason.len() > 123 {
        reason.pop();
    }
    WsMessage::Close(Some(CloseFrame { code, reason: reason.into() }))
}

struct BusyGuard(Arc<AtomicBool>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

async fn trainee_socket(socket: WebSocket, app: AppState) {
    let (mut sink, mut stream) = socket.split();
    if app.busy.swap(true, Ordering::SeqCst) {
        let _ = sink.send(close(CLOSE_TRY_AGAIN_LATER, "another trainee is connected")).await;
        return;
    }
    let _guard = BusyGuard(app.busy.clone());
    let id = app.next_id.fetch_add(1, Ordering::SeqCst);
    let (out_tx, mut out_rx) = mpsc::channel::<Outbound>(EVENT_QUEUE);
    if app.inbound.try_send(Inbound::Connect { id, events: out_tx.clone() }).is_err() {
        let _ = sink.send(close(CLOSE_INTERNAL_ERROR, "server not accepting sessions")).await;
        return;
    }

    let mut state_rx = app.state.clone();
    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        loop {
            let message = tokio::select! {
                out = out_rx.recv() => match out {
                    Some(Outbound::Message(m)) => m,
                    Some(Outbound::Close { code, reason }) => {
                        let _ = sink.send(close(code, &reason)).await;
                        break;
                    }
                    None => break,
                },
                changed = state_rx.changed() => {
                    if changed.is_err() {
                        break;
                    }
                    let s = state_rx.borrow_and_update().clone();
                    ServerMessage::State((*s).clone())
                }
            };
            seq += 1;
            if sink.send(WsMessage::Text(encode(seq, &message).into())).await.is_err() {
                break;
            }
        }
    });

    while let Some(frame) = stream.next().await {
        match frame {
            Ok(WsMessage::Text(text)) => match decode::<ClientMessage>(text.as_str()) {
                Ok(envelope) => match app.inbound.try_send(Inbound::Message { id, message: envelope.message }) {
                    Ok(()) => {}
                    Err(TrySendError::Full(_)) => {
                        let busy = ErrorMessage::new(ErrorCode::Busy, "command queue full, message dropped");
                        let _ = out_tx.try_send(Outbound::Message(ServerMessage::Error(busy)));
                    }
                    Err(TrySendError::Disconnected(_)) => break,
                },
                Err(e) => {
                    let _ = out_tx.send(Outbound::Close { code: CLOSE_PROTOCOL_ERROR, reason: e.to_string() }).await;
                    break;
                }
            },
            Ok(WsMessage::Binary(_)) => {
                let reason = "binary frames are not supported".to_string();
                let _ = out_tx.send(Outbound::Close { code: CLOSE_UNSUPPORTED_DATA, reason }).await;
                break;
            }
            Ok(WsMessage::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }

    // The disconnect must reach the loop even if the queue is momentarily full.
    let inbound = app.inbound.clone();
    let _ = tokio::task::spawn_blocking(move || inbound.send(Inbound::Disconnect { id })).await;
    drop(out_tx);
    let _ = writer.await;
}
