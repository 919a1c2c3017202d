mod common;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use ringwire_core::experiment::log::{command_log_path, read_command_file, read_trial_file, replay, trial_log_path};
use ringwire_core::experiment::operator::SyntheticOperator;
use ringwire_core::forcefield::FieldMode;
use ringwire_core::geometry::{PathExport, WirePath};
use ringwire_core::simulator::{Observation, TrialPhase};
use ringwire_service::protocol::*;
use ringwire_service::server::{self, RunningServer, ServeConfig, CLOSE_PROTOCOL_ERROR, CLOSE_TRY_AGAIN_LATER};
use ringwire_service::session::DISCONNECT_REASON;

use common::*;

async fn serve(log_dir: &Path, group: FieldMode) -> RunningServer {
    let cfg = ServeConfig { addr: "127.0.0.1:0".parse().unwrap(), session: settings(log_dir, group), publish_hz: 60.0 };
    server::start(cfg).await.unwrap()
}

enum Event {
    Message(ServerMessage),
    Closed(Option<u16>),
}

struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    seq: u64,
    last_seen: u64,
}

impl Client {
    async fn connect(addr: SocketAddr) -> Self {
        let (ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
        Self { ws, seq: 0, last_seen: 0 }
    }

    async fn send(&mut self, m: ClientMessage) {
        self.seq += 1;
        self.ws.send(Message::text(encode(self.seq, &m))).await.unwrap();
    }

    async fn control(&mut self, c: ControlMessage) {
        self.send(ClientMessage::Control(c)).await;
    }

    async fn next(&mut self) -> Event {
        loop {
            match timeout(Duration::from_secs(10), self.ws.next()).await.expect("server went quiet") {
                Some(Ok(Message::Text(t))) => {
                    let env: Envelope<ServerMessage> = decode(t.as_str()).unwrap();
                    assert!(env.seq > self.last_seen, "seq {} after {}", env.seq, self.last_seen);
                    self.last_seen = env.seq;
                    return Event::Message(env.message);
                }
                Some(Ok(Message::Close(frame))) => return Event::Closed(frame.map(|f| u16::from(f.code))),
                Some(Ok(_)) => continue,
                Some(Err(_)) | None => return Event::Closed(None),
            }
        }
    }

    async fn message(&mut self) -> ServerMessage {
        match self.next().await {
            Event::Message(m) => m,
            Event::Closed(code) => panic!("closed with {code:?}"),
        }
    }

    /// Skip state updates until a non-state message arrives.
    async fn event(&mut self) -> ServerMessage {
        loop {
            match self.message().await {
                ServerMessage::State(_) => continue,
                m => return m,
            }
        }
    }

    async fn state(&mut self) -> StateUpdate {
        loop {
            if let ServerMessage::State(s) = self.message().await {
                return s;
            }
        }
    }
}

async fn http_get(addr: SocketAddr, path: &str) -> String {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).await.unwrap();
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn path_json_matches_server_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let srv = serve(dir.path(), FieldMode::Null).await;
    let resp = http_get(srv.local_addr(), "/path.json").await;
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    let body = &resp[resp.find("\r\n\r\n").unwrap() + 4..];
    let export: PathExport = serde_json::from_str(body).unwrap();
    let local = WirePath::from_spec(&short_path()).unwrap();
    assert_eq!(export.hash, local.hash());
    assert_eq!(export.spec, short_path());
    assert_eq!(export.poses.len(), server::PATH_EXPORT_SAMPLES);
    assert_eq!(export.poses[0], local.pose_at(0.0));
    assert_eq!(WirePath::from_spec(&export.spec).unwrap().hash(), export.hash);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_client_completes_a_trial_that_replays_headless() {
    let dir = tempfile::tempdir().unwrap();
    let srv = serve(dir.path(), FieldMode::Convergent).await;
    let mut c = Client::connect(srv.local_addr()).await;
    assert!(matches!(c.event().await, ServerMessage::Session(s) if s.session == SessionPhase::Idle));

    c.control(ControlMessage::StartSession { subject: Some("W1".into()), group: None, day: Some(2) }).await;
    assert!(matches!(c.event().await, ServerMessage::Session(s) if s.session == SessionPhase::Ready && s.day == 2));
    c.control(ControlMessage::StartTrial).await;
    assert!(matches!(c.event().await, ServerMessage::Session(s) if s.session == SessionPhase::InTrial));

    let path = WirePath::from_spec(&short_path()).unwrap();
    let mut op = SyntheticOperator::new(remote_model(), 9, 0.001);
    op.begin_trial(FieldMode::Convergent);
    let result = timeout(Duration::from_secs(60), async {
        loop {
            match c.message().await {
                ServerMessage::State(s) if s.session == SessionPhase::InTrial => {
                    let obs = Observation { step: s.step, phase: s.phase, holding_ring: s.holding_ring, ring: s.ring };
                    let cmd = op.act(&obs, &path);
                    c.send(ClientMessage::Input(InputMessage::from_command(&cmd))).await;
                }
                ServerMessage::TrialResult(r) => return r,
                _ => {}
            }
        }
    })
    .await
    .expect("trial finished within a minute");
    assert_eq!(result.phase, TrialPhase::Completed, "{result:?}");
    assert_eq!((result.day, result.trial, result.field), (2, 1, FieldMode::Convergent));
    let m = result.metrics.unwrap();
    assert!(m.time > 0.0 && m.tpe > 0.0);
    assert!(matches!(c.event().await, ServerMessage::Session(s) if s.session == SessionPhase::Ready && s.trial == 2));

    let cmds = read_command_file(&command_log_path(dir.path(), "W1", 2, 1)).unwrap();
    let log = read_trial_file(&trial_log_path(dir.path(), "W1", 2, 1)).unwrap();
    assert!(cmds.records.len() > 10, "inputs were recorded");
    let replayed = replay(&cmds, Arc::new(path)).unwrap();
    assert_eq!(replayed.phase, TrialPhase::Completed);
    assert_eq!(replayed.samples, log.samples);
    assert_eq!(log.header.metrics, Some(m));
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn guards_busy_slot_and_protocol_errors() {
    let dir = tempfile::tempdir().unwrap();
    let srv = serve(dir.path(), FieldMode::Divergent).await;
    let mut a = Client::connect(srv.local_addr()).await;
    a.event().await;

    let mut b = Client::connect(srv.local_addr()).await;
    assert!(matches!(b.next().await, Event::Closed(Some(CLOSE_TRY_AGAIN_LATER))));

    a.control(ControlMessage::StartTrial).await;
    assert!(matches!(a.event().await, ServerMessage::Error(e) if e.code == ErrorCode::InvalidPhase));
    a.control(ControlMessage::StartSession { subject: Some("G1".into()), group: None, day: None }).await;
    assert!(matches!(a.event().await, ServerMessage::Session(s) if s.session == SessionPhase::Ready));

    // No input: the stream keeps flowing and the ring stays put.
    a.control(ControlMessage::StartTrial).await;
    a.event().await;
    let first = a.state().await;
    let t0 = Instant::now();
    let mut count = 0;
    let mut last = first.clone();
    while t0.elapsed() < Duration::from_millis(500) {
        last = a.state().await;
        count += 1;
    }
    assert!(count >= 20, "only {count} updates in 0.5 s");
    assert_eq!(last.ring, first.ring);
    assert!(last.step > first.step);

    a.ws.send(Message::text("{\"type\":\"input\",\"seq\":")).await.unwrap();
    loop {
        match a.next().await {
            Event::Message(_) => continue,
            Event::Closed(code) => {
                assert_eq!(code, Some(CLOSE_PROTOCOL_ERROR));
                break;
            }
        }
    }

    // The running trial was aborted and logged with the disconnect reason.
    let log_path = trial_log_path(dir.path(), "G1", 1, 1);
    let deadline = Instant::now() + Duration::from_secs(5);
    while !log_path.exists() && Instant::now() < deadline {
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let log = read_trial_file(&log_path).unwrap();
    assert_eq!(log.header.phase, TrialPhase::Aborted);
    assert_eq!(log.header.abort_reason.as_deref(), Some(DISCONNECT_REASON));

    // The slot frees up and the session carries on at the next trial.
    let mut c = Client::connect(srv.local_addr()).await;
    let info = loop {
        match c.event().await {
            ServerMessage::Session(s) => break s,
            _ => continue,
        }
    };
    assert_eq!((info.subject.as_str(), info.trial, info.session), ("G1", 2, SessionPhase::Ready));
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn simulation_clock_follows_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let srv = serve(dir.path(), FieldMode::Null).await;
    let mut c = Client::connect(srv.local_addr()).await;
    c.control(ControlMessage::StartSession { subject: None, group: None, day: None }).await;
    c.control(ControlMessage::StartTrial).await;
    let mut first = c.state().await;
    while first.session != SessionPhase::InTrial {
        first = c.state().await;
    }
    let t0 = Instant::now();
    tokio::time::sleep(Duration::from_secs(5)).await;
    // Drain anything buffered, then take the next fresh update.
    let mut last = c.state().await;
    let deadline = Instant::now() + Duration::from_millis(50);
    while Instant::now() < deadline {
        if let Ok(s) = timeout(Duration::from_millis(5), c.state()).await {
            last = s;
        }
    }
    let wall = t0.elapsed().as_secs_f64();
    let sim = last.sim_time - first.sim_time;
    let drift = (sim - wall).abs() / wall;
    assert!(drift < 0.01, "sim {sim:.3} s vs wall {wall:.3} s");
    srv.shutdown().await;
}
