use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::{debug, info, warn};

use super::http;
use super::{
    decode_message, decode_payload, encode_message, frame_len, ClientKind, DecodeError, Envelope, ErrorCode, Message,
    RecordStatus, StopMode, PROTOCOL_VERSION,
};
use crate::engine::{calibrate_extrinsics, Engine, EngineConfig, EngineError, EngineState};
use crate::kinematics::RobotModel;
use crate::recording::{DemoFrame, RecordingError, SessionWriter};
use crate::scene::{voxelize, ColoredPointCloud, VoxelGrid};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub engine: EngineConfig,
    pub model: Arc<RobotModel>,
    /// Scene loaded at startup; clients may replace it per connection.
    pub scene: Arc<VoxelGrid>,
    /// Directory that receives `session-<id>/` folders.
    pub session_root: PathBuf,
    /// Static console assets served over HTTP, if any.
    pub console_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(engine: EngineConfig, session_root: PathBuf) -> Result<Self, EngineError> {
        let model = Arc::new(engine.resolve_model()?);
        let scene = Arc::new(VoxelGrid::empty(engine.collision.origin.into(), engine.collision.resolution));
        Ok(ServerConfig {
            engine,
            model,
            scene,
            session_root,
            console_dir: None,
        })
    }

    pub fn with_scene(mut self, cloud: &ColoredPointCloud) -> Self {
        self.scene = Arc::new(voxelize(cloud, self.engine.collision.origin.into(), self.engine.collision.resolution));
        self
    }
}

struct Shared {
    config: ServerConfig,
    stopping: AtomicBool,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

/// Running background server; stops accepting when dropped or stopped.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: ServerConfig) -> io::Result<Server> {
        Engine::new(config.engine.clone(), config.model.clone(), config.scene.clone())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        Ok(Server {
            listener: TcpListener::bind(addr)?,
            shared: Arc::new(Shared {
                config,
                stopping: AtomicBool::new(false),
            }),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until stopped, one thread per connection.
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            if self.shared.stopping.load(Ordering::SeqCst) {
                break;
            }
            match stream {
                Ok(s) => {
                    let shared = self.shared.clone();
                    thread::spawn(move || {
                        let peer = s.peer_addr().ok();
                        if let Err(e) = handle_connection(s, &shared) {
                            debug!("connection {peer:?} ended: {e}");
                        }
                    });
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
        Ok(())
    }

    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let shared = self.shared.clone();
        let thread = thread::spawn(move || {
            let _ = self.run();
        });
        Ok(ServerHandle {
            addr,
            shared,
            thread: Some(thread),
        })
    }
}

fn handle_connection(mut stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nodelay(true)?;
    if shared.stopping.load(Ordering::SeqCst) {
        return Ok(());
    }
    let mut head = [0u8; 4];
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    loop {
        let n = stream.peek(&mut head)?;
        if n == 0 {
            return Ok(());
        }
        if n == 4 || !b"GET ".starts_with(&head[..n]) {
            break;
        }
        thread::sleep(Duration::from_millis(1));
    }
    stream.set_read_timeout(None)?;
    if &head == b"GET " {
        let req = http::read_request(&mut stream)?;
        if req.is_websocket() {
            http::websocket_accept(&mut stream, &req)?;
            info!("websocket client connected from {:?}", stream.peer_addr().ok());
            return run_websocket(stream, req.rest, shared);
        }
        return match req.path.as_str() {
            "/model" => {
                let body = serde_json::to_vec(&http::model_json(&shared.config.model)).expect("json");
                http::respond(&mut stream, "200 OK", "application/json", &body)
            }
            path => http::serve_static(&mut stream, shared.config.console_dir.as_deref(), path),
        };
    }
    info!("stream client connected from {:?}", stream.peer_addr().ok());
    run_tcp(stream, shared)
}

enum Incoming {
    Msg(Result<Envelope, DecodeError>),
    Closed,
}

/// Queued frames closer together than this are collapsed regardless of lag.
const MIN_FRAME_GAP: f64 = 1e-3;
/// Ticks of backlog tolerated before stale frames are dropped.
const BACKLOG_TICKS: f64 = 2.0;

fn hand_time(i: &Incoming) -> Option<f64> {
    match i {
        Incoming::Msg(Ok(Envelope {
            message: Message::HandFrame { frame, .. },
            ..
        })) => Some(frame.timestamp),
        _ => None,
    }
}

/// Pops the next item. Within a run of queued hand frames, a frame is
/// dropped in favor of its successor when the successor is less than
/// [`MIN_FRAME_GAP`] newer, or when the newest queued frame is more than
/// `max_lag` seconds ahead of it (the client is outrunning the engine).
fn next_coalesced(queue: &mut VecDeque<Incoming>, max_lag: f64) -> Option<(Incoming, u64)> {
    let mut item = queue.pop_front()?;
    let mut dropped = 0;
    let newest = queue.iter().map_while(hand_time).last();
    while let (Some(t), Some(next), Some(newest)) = (hand_time(&item), queue.front().and_then(hand_time), newest) {
        if !(next - t < MIN_FRAME_GAP || newest - t > max_lag) {
            break;
        }
        item = queue.pop_front().unwrap();
        dropped += 1;
    }
    Some((item, dropped))
}

fn run_tcp(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    let (tx, rx) = mpsc::channel();
    let mut reader = stream.try_clone()?;
    thread::spawn(move || loop {
        let mut hdr = [0u8; 4];
        if reader.read_exact(&mut hdr).is_err() {
            let _ = tx.send(Incoming::Closed);
            return;
        }
        let len = match frame_len(&hdr) {
            Ok(len) => len,
            Err(e) => {
                let _ = tx.send(Incoming::Msg(Err(e)));
                let _ = tx.send(Incoming::Closed);
                return;
            }
        };
        let mut payload = vec![0u8; len];
        if reader.read_exact(&mut payload).is_err() {
            let _ = tx.send(Incoming::Closed);
            return;
        }
        if tx.send(Incoming::Msg(decode_payload(&payload))).is_err() {
            return;
        }
    });

    let mut writer = stream;
    let mut conn = Connection::new(shared);
    let max_lag = BACKLOG_TICKS / shared.config.engine.tick_rate;
    let mut queue = VecDeque::new();
    let mut replies = Vec::new();
    loop {
        if queue.is_empty() {
            match rx.recv() {
                Ok(i) => queue.push_back(i),
                Err(_) => break,
            }
        }
        while let Ok(i) = rx.try_recv() {
            queue.push_back(i);
        }
        let Some((item, dropped)) = next_coalesced(&mut queue, max_lag) else {
            continue;
        };
        let Incoming::Msg(msg) = item else {
            break;
        };
        replies.clear();
        let close = conn.handle(msg, dropped, &mut replies);
        let mut bytes = Vec::new();
        for m in replies.drain(..) {
            bytes.extend(conn.envelope(m));
        }
        if !bytes.is_empty() && writer.write_all(&bytes).is_err() {
            break;
        }
        if close {
            break;
        }
    }
    conn.close();
    let _ = writer.shutdown(std::net::Shutdown::Both);
    Ok(())
}

fn run_websocket(stream: TcpStream, rest: Vec<u8>, shared: &Shared) -> io::Result<()> {
    use tungstenite::protocol::Role;
    use tungstenite::{Error as WsError, Message as WsMessage, WebSocket};

    stream.set_nonblocking(true)?;
    let mut ws = WebSocket::from_partially_read(stream, rest, Role::Server, None);
    let mut conn = Connection::new(shared);
    let max_lag = BACKLOG_TICKS / shared.config.engine.tick_rate;
    let mut queue = VecDeque::new();
    let mut replies = Vec::new();
    let mut open = true;
    while open {
        loop {
            match ws.read() {
                Ok(WsMessage::Binary(data)) => {
                    let mut pos = 0;
                    while pos < data.len() {
                        match decode_message(&data[pos..]) {
                            Ok((env, used)) => {
                                queue.push_back(Incoming::Msg(Ok(env)));
                                pos += used;
                            }
                            Err(e) => {
                                queue.push_back(Incoming::Msg(Err(match e {
                                    DecodeError::Incomplete { .. } => {
                                        DecodeError::Protocol("websocket message holds a partial frame".into())
                                    }
                                    e => e,
                                })));
                                break;
                            }
                        }
                    }
                }
                Ok(WsMessage::Text(_)) => queue.push_back(Incoming::Msg(Err(DecodeError::Protocol(
                    "frames must be sent as binary messages".into(),
                )))),
                Ok(WsMessage::Close(_)) => queue.push_back(Incoming::Closed),
                Ok(_) => {}
                Err(WsError::Io(e)) if e.kind() == io::ErrorKind::WouldBlock => break,
                Err(_) => {
                    queue.push_back(Incoming::Closed);
                    break;
                }
            }
        }
        let Some((item, dropped)) = next_coalesced(&mut queue, max_lag) else {
            match ws.flush() {
                Ok(()) => {}
                Err(WsError::Io(e)) if e.kind() == io::ErrorKind::WouldBlock => {}
                Err(_) => break,
            }
            thread::sleep(Duration::from_millis(1));
            continue;
        };
        let Incoming::Msg(msg) = item else {
            break;
        };
        replies.clear();
        let close = conn.handle(msg, dropped, &mut replies);
        for m in replies.drain(..) {
            let frame = conn.envelope(m);
            match ws.send(WsMessage::Binary(frame.into())) {
                Ok(()) => {}
                Err(WsError::Io(e)) if e.kind() == io::ErrorKind::WouldBlock => {}
                Err(_) => open = false,
            }
        }
        if close {
            // drain what is buffered before closing
            for _ in 0..100 {
                match ws.flush() {
                    Err(WsError::Io(e)) if e.kind() == io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(1))
                    }
                    _ => break,
                }
            }
            let _ = ws.close(None);
            let _ = ws.flush();
            open = false;
        }
    }
    conn.close();
    Ok(())
}

/// Protocol state for one client.
struct Connection<'a> {
    shared: &'a Shared,
    engine: Engine,
    state: EngineState,
    greeted: bool,
    last_client_seq: Option<u64>,
    next_seq: u64,
    dropped: u64,
    recorder: Option<SessionWriter>,
}

impl<'a> Connection<'a> {
    fn new(shared: &'a Shared) -> Self {
        let c = &shared.config;
        let engine =
            Engine::new(c.engine.clone(), c.model.clone(), c.scene.clone()).expect("validated when the server was bound");
        let state = engine.initial_state();
        Connection {
            shared,
            engine,
            state,
            greeted: false,
            last_client_seq: None,
            next_seq: 0,
            dropped: 0,
            recorder: None,
        }
    }

    fn envelope(&mut self, message: Message) -> Vec<u8> {
        let seq = self.next_seq;
        self.next_seq += 1;
        encode_message(&Envelope { seq, message })
    }

    /// Handles one inbound item, pushing replies. Returns true when the
    /// connection must close.
    fn handle(&mut self, item: Result<Envelope, DecodeError>, dropped: u64, out: &mut Vec<Message>) -> bool {
        self.dropped += dropped;
        let env = match item {
            Ok(env) => env,
            Err(e @ DecodeError::TooLarge(_)) => {
                out.push(Message::error(ErrorCode::Protocol, e.to_string()));
                return true;
            }
            Err(e) => {
                out.push(Message::error(ErrorCode::Protocol, e.to_string()));
                return false;
            }
        };
        if self.last_client_seq.is_some_and(|s| env.seq <= s) {
            out.push(Message::error(
                ErrorCode::Protocol,
                format!("sequence number {} does not increase", env.seq),
            ));
            return false;
        }
        self.last_client_seq = Some(env.seq);

        if !self.greeted {
            return match env.message {
                Message::Hello { protocol_version, .. } if protocol_version == PROTOCOL_VERSION => {
                    self.greeted = true;
                    out.push(Message::Hello {
                        protocol_version: PROTOCOL_VERSION,
                        client_kind: ClientKind::Server,
                    });
                    false
                }
                Message::Hello { protocol_version, .. } => {
                    out.push(Message::error(
                        ErrorCode::VersionMismatch,
                        format!("client speaks version {protocol_version}, server speaks {PROTOCOL_VERSION}"),
                    ));
                    true
                }
                other => {
                    out.push(Message::error(
                        ErrorCode::HandshakeRequired,
                        format!("expected hello, got {}", other.type_name()),
                    ));
                    true
                }
            };
        }

        match env.message {
            Message::HandFrame { frame, cloud } => self.hand_frame(frame, cloud.map(|c| c.0), out),
            Message::SceneUpload { cloud } => {
                let c = &self.engine.config().collision;
                let grid = voxelize(&cloud.0, c.origin.into(), c.resolution);
                info!("scene uploaded: {} points, {} voxels", cloud.0.len(), grid.len());
                self.engine = self.engine.with_grid(Arc::new(grid));
            }
            Message::PlaceRobot { pose } => {
                if !pose.is_finite() {
                    out.push(Message::error(ErrorCode::InvalidFrame, "robot pose is not finite"));
                } else {
                    self.engine = self.engine.with_base(pose);
                    self.state = self.engine.initial_state();
                }
            }
            Message::Calibrate { t_wb, t_wc } => out.push(Message::CalibrationResult {
                pose: calibrate_extrinsics(&t_wb, &t_wc),
            }),
            Message::RecordStart { session_id } => out.push(self.record_start(session_id.as_deref())),
            Message::RecordStop { mode } => out.push(self.record_stop(mode)),
            Message::Hello { .. } => out.push(Message::error(ErrorCode::Protocol, "duplicate hello")),
            other => out.push(Message::error(
                ErrorCode::Protocol,
                format!("{} is not accepted from clients", other.type_name()),
            )),
        }
        false
    }

    fn hand_frame(
        &mut self,
        frame: crate::retargeting::HandFrame,
        cloud: Option<ColoredPointCloud>,
        out: &mut Vec<Message>,
    ) {
        let (next, output) = match self.engine.process_frame(&self.state, &frame) {
            Ok(r) => r,
            Err(EngineError::OutOfOrder { last, got }) => {
                out.push(Message::error(
                    ErrorCode::Ordering,
                    format!("frame at t={got} does not follow t={last}"),
                ));
                return;
            }
            Err(EngineError::Frame(e)) => {
                out.push(Message::error(ErrorCode::InvalidFrame, e.to_string()));
                return;
            }
            Err(e) => {
                out.push(Message::error(ErrorCode::Internal, e.to_string()));
                return;
            }
        };
        self.state = next;
        if let Some(rec) = &mut self.recorder {
            let demo = DemoFrame::new(
                output.timestamp,
                cloud.unwrap_or_default(),
                &output.q,
                &frame.headset,
                &self.engine.config().base,
                output.gripper,
                &output.events,
            );
            if let Err(e) = rec.append(&demo, Some(&frame)) {
                out.push(Message::error(recording_code(&e), e.to_string()));
            }
        }
        out.push(Message::EngineOutput {
            output,
            dropped: std::mem::take(&mut self.dropped),
        });
    }

    fn record_start(&mut self, id: Option<&str>) -> Message {
        if let Some(r) = &self.recorder {
            if r.status() == RecordStatus::Recording {
                return Message::error(ErrorCode::State, format!("session {} is already recording", r.id()));
            }
        }
        match SessionWriter::create(&self.shared.config.session_root, id, self.engine.config()) {
            Ok(w) => {
                info!("recording session {}", w.id());
                let ack = Message::RecordAck {
                    session_id: w.id().to_string(),
                    status: RecordStatus::Recording,
                    frame_count: 0,
                };
                self.recorder = Some(w);
                ack
            }
            Err(e) => Message::error(recording_code(&e), e.to_string()),
        }
    }

    fn record_stop(&mut self, mode: StopMode) -> Message {
        let Some(w) = self.recorder.as_mut().filter(|w| w.status() == RecordStatus::Recording) else {
            return Message::error(ErrorCode::State, "no session is recording");
        };
        let result = match mode {
            StopMode::Finalize => w.finalize().map(|m| m.frame_count),
            StopMode::Discard => w.discard().map(|m| m.frame_count),
        };
        match result {
            Ok(frame_count) => {
                info!("session {} {:?}", w.id(), w.status());
                Message::RecordAck {
                    session_id: w.id().to_string(),
                    status: w.status(),
                    frame_count,
                }
            }
            Err(e) => Message::error(recording_code(&e), e.to_string()),
        }
    }

    fn close(&mut self) {
        if let Some(w) = &mut self.recorder {
            if w.status() == RecordStatus::Recording {
                info!("client left while recording; discarding session {}", w.id());
                if let Err(e) = w.discard() {
                    warn!("discard of {} failed: {e}", w.id());
                }
            }
        }
    }
}

fn recording_code(e: &RecordingError) -> ErrorCode {
    match e {
        RecordingError::State(_) => ErrorCode::State,
        RecordingError::Ordering { .. } => ErrorCode::Ordering,
        RecordingError::Integrity { .. } => ErrorCode::Integrity,
        _ => ErrorCode::Internal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate, Scenario};

    fn queue_of(times: &[f64]) -> VecDeque<Incoming> {
        let f = simulate(Scenario::Reach, 0)[0];
        times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                Incoming::Msg(Ok(Envelope {
                    seq: k as u64,
                    message: Message::HandFrame {
                        frame: crate::retargeting::HandFrame { timestamp: t, ..f },
                        cloud: None,
                    },
                }))
            })
            .collect()
    }

    #[test]
    fn small_backlog_is_kept() {
        let lag = BACKLOG_TICKS / 60.0;
        let mut q = queue_of(&[0.0, 1.0 / 60.0, 2.0 / 60.0]);
        let (item, dropped) = next_coalesced(&mut q, lag).unwrap();
        assert_eq!((hand_time(&item), dropped), (Some(0.0), 0));
    }

    #[test]
    fn bursts_and_stale_frames_collapse() {
        let lag = BACKLOG_TICKS / 60.0;
        let mut q = queue_of(&[0.0, 0.0005, 0.02]);
        let (item, dropped) = next_coalesced(&mut q, lag).unwrap();
        assert_eq!((hand_time(&item), dropped), (Some(0.0005), 1));

        let times: Vec<f64> = (0..10).map(|k| k as f64 / 60.0).collect();
        let mut q = queue_of(&times);
        let (item, dropped) = next_coalesced(&mut q, lag).unwrap();
        assert_eq!((hand_time(&item), dropped), (Some(7.0 / 60.0), 7));
        assert_eq!(q.len(), 2);
    }
}
