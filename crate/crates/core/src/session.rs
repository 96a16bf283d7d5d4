//! Live operator sessions over TCP.
//!
//! Newline-delimited JSON records tagged by `"type"`. One operator at a time;
//! a second client gets an `error` record and is disconnected. The control
//! loop owns the session state and talks to the socket threads through a
//! latest-wins inbound slot and a bounded drop-oldest telemetry queue.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::dataset::{self, Observation};
use crate::gripper::{classify_outcome, ObjectModel, OutcomeLabel, TracePoint};
use crate::server::{record_sample, Event, Pipeline, PoseInput, ServerError, TickInput, TickReport};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: std::io::Error },
    #[error("client protocol error: {0}")]
    ClientProtocolError(String),
    #[error("session i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordAction {
    Start,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        name: String,
    },
    PoseDelta {
        dx: f64,
        dy: f64,
        dz: f64,
        droll: f64,
        dpitch: f64,
        dyaw: f64,
    },
    Clutch {
        engaged: bool,
    },
    Gripper {
        target_opening_mm: f64,
    },
    Record {
        action: RecordAction,
    },
    SelectObject {
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    State {
        tick: u64,
        joints: [f64; 6],
        ee_pose: [f64; 7],
        opening_mm: f64,
        force_norm: f64,
        events: Vec<Event>,
    },
    EpisodeEnd {
        outcome: OutcomeLabel,
        peak_force: f64,
    },
    Error {
        reason: String,
    },
}

impl ServerMessage {
    pub fn state(r: &TickReport, events: Vec<Event>) -> Self {
        ServerMessage::State {
            tick: r.tick,
            joints: *r.joints.as_array(),
            ee_pose: r.ee_pose.to_array(),
            opening_mm: r.opening_mm,
            force_norm: r.force.normalized,
            events,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("plain data");
        s.push('\n');
        s
    }
}

pub fn parse_client_line(line: &str) -> Result<ClientMessage, String> {
    let msg: ClientMessage = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let finite = match &msg {
        ClientMessage::PoseDelta {
            dx,
            dy,
            dz,
            droll,
            dpitch,
            dyaw,
        } => [dx, dy, dz, droll, dpitch, dyaw].iter().all(|v| v.is_finite()),
        ClientMessage::Gripper { target_opening_mm } => target_opening_mm.is_finite(),
        _ => true,
    };
    if finite {
        Ok(msg)
    } else {
        Err("non-finite number".into())
    }
}

/// Ordered, non-coalescable client requests.
#[derive(Debug, Clone, PartialEq)]
enum Control {
    Clutch(bool),
    Record(RecordAction),
    SelectObject(String),
}

#[derive(Debug, Default)]
struct Inbound {
    translation: Vector3<f64>,
    rotation: Vector3<f64>,
    moved: bool,
    gripper: Option<f64>,
    controls: VecDeque<Control>,
    closed: Option<Result<(), String>>,
}

/// Pose, gripper target, ordered controls and the close reason drained in one tick.
type Taken = (Option<PoseInput>, Option<f64>, Vec<Control>, Option<Result<(), String>>);

/// Latest-wins command slot. Pose deltas accumulate until taken so no motion
/// is lost; the gripper target is overwritten.
#[derive(Debug, Default)]
struct CommandSlot(Mutex<Inbound>);

impl CommandSlot {
    fn put(&self, msg: ClientMessage) {
        let mut s = self.0.lock().expect("slot lock");
        match msg {
            ClientMessage::Hello { name } => log::info!("operator {name:?} connected"),
            ClientMessage::PoseDelta {
                dx,
                dy,
                dz,
                droll,
                dpitch,
                dyaw,
            } => {
                s.translation += Vector3::new(dx, dy, dz);
                s.rotation += Vector3::new(droll, dpitch, dyaw);
                s.moved = true;
            }
            ClientMessage::Gripper { target_opening_mm } => s.gripper = Some(target_opening_mm),
            ClientMessage::Clutch { engaged } => s.controls.push_back(Control::Clutch(engaged)),
            ClientMessage::Record { action } => s.controls.push_back(Control::Record(action)),
            ClientMessage::SelectObject { name } => s.controls.push_back(Control::SelectObject(name)),
        }
    }

    fn close(&self, result: Result<(), String>) {
        self.0.lock().expect("slot lock").closed.get_or_insert(result);
    }

    fn take(&self) -> Taken {
        let mut s = self.0.lock().expect("slot lock");
        let pose = s.moved.then(|| PoseInput::OperatorDelta {
            translation: s.translation,
            rotation: s.rotation,
        });
        s.translation = Vector3::zeros();
        s.rotation = Vector3::zeros();
        s.moved = false;
        let controls = s.controls.drain(..).collect();
        (pose, s.gripper.take(), controls, s.closed.clone())
    }
}

/// Bounded outbound queue; the oldest record is dropped on overflow.
#[derive(Debug)]
pub struct TelemetryQueue {
    inner: Mutex<(VecDeque<ServerMessage>, bool)>,
    ready: Condvar,
    capacity: usize,
}

impl TelemetryQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: Mutex::new((VecDeque::with_capacity(capacity), false)),
            ready: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    /// Returns true if an older record was dropped.
    pub fn push(&self, msg: ServerMessage) -> bool {
        let mut g = self.inner.lock().expect("queue lock");
        let dropped = if g.0.len() >= self.capacity {
            g.0.pop_front();
            true
        } else {
            false
        };
        g.0.push_back(msg);
        self.ready.notify_one();
        dropped
    }

    pub fn close(&self) {
        self.inner.lock().expect("queue lock").1 = true;
        self.ready.notify_all();
    }

    /// Blocks until a record is available; `None` once closed and drained.
    pub fn pop(&self) -> Option<ServerMessage> {
        let mut g = self.inner.lock().expect("queue lock");
        loop {
            if let Some(m) = g.0.pop_front() {
                return Some(m);
            }
            if g.1 {
                return None;
            }
            g = self.ready.wait(g).expect("queue lock");
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    /// Pace ticks to wall-clock time.
    pub realtime: bool,
    /// Stop after this many ticks even if the client stays connected.
    pub max_ticks: Option<u64>,
    /// Where recorded episodes are written.
    pub out_dir: Option<PathBuf>,
    pub queue_capacity: usize,
    /// Initially selected object.
    pub object: String,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            realtime: true,
            max_ticks: None,
            out_dir: None,
            queue_capacity: 64,
            object: "tomato".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub ticks: u64,
    pub telemetry_sent: u64,
    pub telemetry_dropped: u64,
    pub episodes_written: Vec<PathBuf>,
}

pub fn bind(addr: impl ToSocketAddrs + std::fmt::Display) -> Result<TcpListener, SessionError> {
    TcpListener::bind(&addr).map_err(|source| SessionError::BindFailure {
        addr: addr.to_string(),
        source,
    })
}

fn reject(mut stream: TcpStream) {
    let msg = ServerMessage::Error {
        reason: "session busy: one operator at a time".into(),
    };
    let _ = stream.write_all(msg.to_line().as_bytes());
    let _ = stream.shutdown(Shutdown::Both);
}

/// Turns away further clients until `stop` is set.
fn spawn_rejecter(listener: TcpListener, stop: Arc<AtomicBool>) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        if listener.set_nonblocking(true).is_err() {
            return;
        }
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((s, peer)) => {
                    log::warn!("rejecting second client {peer}");
                    let _ = s.set_nonblocking(false);
                    reject(s);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
                Err(_) => thread::sleep(Duration::from_millis(5)),
            }
        }
    })
}

fn spawn_reader(stream: TcpStream, slot: Arc<CommandSlot>) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    slot.close(Err(e.to_string()));
                    return;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            match parse_client_line(&line) {
                Ok(msg) => slot.put(msg),
                Err(reason) => {
                    slot.close(Err(reason));
                    return;
                }
            }
        }
        slot.close(Ok(()));
    })
}

fn spawn_writer(mut stream: TcpStream, queue: Arc<TelemetryQueue>) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        while let Some(msg) = queue.pop() {
            if stream.write_all(msg.to_line().as_bytes()).is_err() {
                break;
            }
        }
        let _ = stream.flush();
        let _ = stream.shutdown(Shutdown::Both);
    })
}

struct Recorder {
    samples: Vec<(Observation, [f64; 7])>,
    trace: Vec<TracePoint>,
    count: u64,
}

/// Serves a single operator session on `listener`. Returns when the client
/// disconnects (or `max_ticks` elapse); a malformed record is answered with
/// an `error` record, the client is disconnected and
/// [`SessionError::ClientProtocolError`] is returned.
pub fn serve(
    listener: TcpListener,
    pipeline: &Pipeline,
    config: &Config,
    opts: &SessionOptions,
) -> Result<SessionSummary, SessionError> {
    let (stream, peer) = listener.accept()?;
    log::info!("operator connected from {peer}");
    stream.set_nodelay(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let rejecter = spawn_rejecter(listener, stop.clone());

    let slot = Arc::new(CommandSlot::default());
    let queue = Arc::new(TelemetryQueue::new(opts.queue_capacity));
    let reader = spawn_reader(stream.try_clone()?, slot.clone());
    let writer = spawn_writer(stream.try_clone()?, queue.clone());

    let result = control_loop(pipeline, config, opts, &slot, &queue);

    queue.close();
    let _ = writer.join();
    let _ = stream.shutdown(Shutdown::Both);
    let _ = reader.join();
    stop.store(true, Ordering::Relaxed);
    let _ = rejecter.join();
    result
}

fn control_loop(
    pipeline: &Pipeline,
    config: &Config,
    opts: &SessionOptions,
    slot: &CommandSlot,
    queue: &TelemetryQueue,
) -> Result<SessionSummary, SessionError> {
    let cfg = &pipeline.cfg;
    let object = config.object(&opts.object).unwrap_or_else(|_| ObjectModel::tomato());
    let mut state = pipeline.new_session(object, 0);
    let mut summary = SessionSummary {
        ticks: 0,
        telemetry_sent: 0,
        telemetry_dropped: 0,
        episodes_written: Vec::new(),
    };
    let mut recorder: Option<Recorder> = None;
    let mut episodes = 0u64;
    let mut pending_events: Vec<Event> = Vec::new();
    let period = Duration::from_secs_f64(cfg.dt());
    let start = Instant::now();
    let publish = |queue: &TelemetryQueue, msg: ServerMessage, s: &mut SessionSummary| {
        s.telemetry_sent += 1;
        if queue.push(msg) {
            s.telemetry_dropped += 1;
        }
    };

    loop {
        if opts.max_ticks.is_some_and(|m| state.tick >= m) {
            return Ok(summary);
        }
        let (pose, gripper, controls, closed) = slot.take();
        if let Some(Err(reason)) = &closed {
            publish(queue, ServerMessage::Error { reason: reason.clone() }, &mut summary);
            return Err(SessionError::ClientProtocolError(reason.clone()));
        }

        let mut input = TickInput {
            pose,
            gripper_target_mm: gripper,
            ..TickInput::default()
        };
        for c in controls {
            match c {
                Control::Clutch(on) => input.clutch = Some(on),
                Control::SelectObject(name) => match config.object(&name) {
                    Ok(obj) => state.object = obj,
                    Err(e) => publish(queue, ServerMessage::Error { reason: e.to_string() }, &mut summary),
                },
                Control::Record(RecordAction::Start) => {
                    recorder = Some(Recorder {
                        samples: Vec::new(),
                        trace: Vec::new(),
                        count: 0,
                    });
                }
                Control::Record(RecordAction::Stop) => {
                    if let Some(rec) = recorder.take() {
                        let msg = finish_recording(pipeline, opts, &state.object, episodes, rec, &mut summary)?;
                        episodes += 1;
                        publish(queue, msg, &mut summary);
                    }
                }
            }
        }

        let report = pipeline.tick(&mut state, &input);
        summary.ticks += 1;
        if let Some(rec) = recorder.as_mut() {
            rec.trace.push(TracePoint {
                force: report.contact_force,
                opening: report.opening_mm,
                lifted: report.lifted,
            });
            if rec.count % cfg.record_decimation as u64 == 0 {
                rec.samples.push(record_sample(&report, pipeline.gripper.stroke));
            }
            rec.count += 1;
        }
        if closed.is_some() {
            // Keep whatever was being recorded when the operator left.
            if let Some(rec) = recorder.take() {
                let msg = finish_recording(pipeline, opts, &state.object, episodes, rec, &mut summary)?;
                publish(queue, msg, &mut summary);
            }
            log::info!("operator disconnected after {} ticks", state.tick);
            return Ok(summary);
        }

        for e in &report.events {
            if !pending_events.contains(e) {
                pending_events.push(*e);
            }
        }
        if report.tick.is_multiple_of(cfg.telemetry_decimation as u64) {
            let events = std::mem::take(&mut pending_events);
            publish(queue, ServerMessage::state(&report, events), &mut summary);
        }

        if opts.realtime {
            let deadline = start + period * (state.tick as u32);
            let now = Instant::now();
            if deadline > now {
                thread::sleep(deadline - now);
            }
        }
    }
}

fn finish_recording(
    pipeline: &Pipeline,
    opts: &SessionOptions,
    object: &ObjectModel,
    episode: u64,
    rec: Recorder,
    summary: &mut SessionSummary,
) -> Result<ServerMessage, SessionError> {
    if rec.trace.is_empty() {
        return Ok(ServerMessage::Error {
            reason: "recording stopped before any tick".into(),
        });
    }
    let outcome = classify_outcome(&rec.trace, object).map_err(ServerError::from)?;
    if let Some(dir) = &opts.out_dir {
        let header = dataset::TrajectoryHeader {
            episode_id: episode,
            task: object.name.clone(),
            control_hz: pipeline.cfg.control_hz,
            record_hz: pipeline.cfg.record_hz(),
            stroke_mm: pipeline.gripper.stroke,
            f_max: pipeline.haptics.f_max,
            outcome: Some(outcome),
            ..dataset::TrajectoryHeader::default()
        };
        let traj = dataset::assemble(header, &rec.samples)?;
        std::fs::create_dir_all(dir).map_err(|source| dataset::DatasetError::Io {
            path: dir.clone(),
            source,
        })?;
        let path = dir.join(format!("live_{episode:04}.jsonl"));
        dataset::export(&traj, &path)?;
        summary.episodes_written.push(path);
    }
    Ok(ServerMessage::EpisodeEnd {
        outcome: outcome.label,
        peak_force: outcome.peak_force,
    })
}

/// Address a listener is bound to, for printing.
pub fn endpoint(listener: &TcpListener) -> std::io::Result<SocketAddr> {
    listener.local_addr()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_round_trip() {
        let msgs = [
            r#"{"type":"hello","name":"op"}"#,
            r#"{"type":"pose_delta","dx":0.01,"dy":0,"dz":0,"droll":0,"dpitch":0,"dyaw":0.1}"#,
            r#"{"type":"clutch","engaged":true}"#,
            r#"{"type":"gripper","target_opening_mm":30}"#,
            r#"{"type":"record","action":"start"}"#,
            r#"{"type":"select_object","name":"egg"}"#,
        ];
        for m in msgs {
            let parsed = parse_client_line(m).unwrap();
            let again: ClientMessage = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
            assert_eq!(parsed, again);
        }
        assert!(parse_client_line(r#"{"type":"warp"}"#).is_err());
        assert!(parse_client_line(r#"{"type":"clutch"}"#).is_err());
        assert!(parse_client_line("not json").is_err());
    }

    #[test]
    fn server_message_shape() {
        let line = ServerMessage::EpisodeEnd {
            outcome: OutcomeLabel::Success,
            peak_force: 1.5,
        }
        .to_line();
        assert_eq!(
            line,
            "{\"type\":\"episode_end\",\"outcome\":\"success\",\"peak_force\":1.5}\n"
        );
    }

    #[test]
    fn slot_coalesces() {
        let slot = CommandSlot::default();
        for _ in 0..3 {
            slot.put(ClientMessage::PoseDelta {
                dx: 0.01,
                dy: 0.0,
                dz: 0.0,
                droll: 0.0,
                dpitch: 0.0,
                dyaw: 0.0,
            });
        }
        slot.put(ClientMessage::Gripper {
            target_opening_mm: 50.0,
        });
        slot.put(ClientMessage::Gripper {
            target_opening_mm: 40.0,
        });
        slot.put(ClientMessage::Clutch { engaged: true });
        slot.put(ClientMessage::Clutch { engaged: false });
        let (pose, gripper, controls, closed) = slot.take();
        match pose {
            Some(PoseInput::OperatorDelta { translation, .. }) => assert!((translation.x - 0.03).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(gripper, Some(40.0));
        assert_eq!(controls, vec![Control::Clutch(true), Control::Clutch(false)]);
        assert!(closed.is_none());
        let (pose, gripper, controls, _) = slot.take();
        assert!(pose.is_none() && gripper.is_none() && controls.is_empty());
    }

    #[test]
    fn queue_drops_oldest() {
        let q = TelemetryQueue::new(2);
        let err = |r: &str| ServerMessage::Error { reason: r.into() };
        assert!(!q.push(err("a")));
        assert!(!q.push(err("b")));
        assert!(q.push(err("c")));
        q.close();
        assert_eq!(q.pop(), Some(err("b")));
        assert_eq!(q.pop(), Some(err("c")));
        assert_eq!(q.pop(), None);
    }
}
