use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use super::{
    error_payload, read_message, write_message, FrameMessage, FramePayload, MessageType, StreamError,
};
use crate::fiducial::FiducialError;
use crate::guidance::{build_geometry, read_annotations, Annotation, GuidanceError};
use crate::simulator::{FrameKind, SimulatorError, SimulatorSession};
use crate::textfmt;
use crate::tracking::{CalibrationRecord, TrackingError};

/// Simulated seconds each acquisition advances a client's clock.
const SECONDS_PER_ACQUISITION: f64 = 1.0;

struct Shared {
    session: SimulatorSession,
    // single writer: LOCK replaces a view's record under the write lock
    calibrations: RwLock<BTreeMap<String, CalibrationRecord>>,
}

/// A running server; dropping the handle leaves it running.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting clients. Open sessions run until their peers hang up.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock accept()
        let _ = TcpStream::connect(self.addr);
        let _ = self.accept.join();
    }

    /// Blocks for the lifetime of the server.
    pub fn wait(self) {
        let _ = self.accept.join();
    }
}

/// Binds `bind_address` and serves every client on its own thread.
pub fn serve(bind_address: &str, session: SimulatorSession) -> Result<ServerHandle, StreamError> {
    let listener = TcpListener::bind(bind_address).map_err(|source| StreamError::Bind {
        address: bind_address.to_string(),
        source,
    })?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        session,
        calibrations: RwLock::new(BTreeMap::new()),
    });
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let accept = thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let shared = shared.clone();
            thread::spawn(move || {
                let _ = handle_client(stream, &shared);
            });
        }
    });
    Ok(ServerHandle { addr, stop, accept })
}

struct ClientSession {
    expected: u64,
    next_out: u64,
    clock: f64,
    annotations: Vec<Annotation>,
}

fn handle_client(stream: TcpStream, shared: &Shared) -> Result<(), StreamError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream.try_clone()?);
    let mut s = ClientSession {
        expected: 0,
        next_out: 0,
        clock: 0.0,
        annotations: Vec::new(),
    };
    let mut send = |s: &mut ClientSession, t: MessageType, payload: Vec<u8>| {
        let m = FrameMessage::new(t, s.next_out, payload);
        s.next_out += 1;
        write_message(&mut writer, &m)
    };
    loop {
        let m = match read_message(&mut reader) {
            Ok(Some(m)) => m,
            Ok(None) => break,
            Err(e) => {
                let _ = send(
                    &mut s,
                    MessageType::Error,
                    error_payload("ProtocolError", &e.to_string()),
                );
                break;
            }
        };
        if m.sequence != s.expected {
            let e = StreamError::Sequence {
                expected: s.expected,
                got: m.sequence,
            };
            let _ = send(
                &mut s,
                MessageType::Error,
                error_payload("ProtocolError", &e.to_string()),
            );
            break;
        }
        s.expected += 1;
        let reply = match m.message_type {
            MessageType::Frame => on_frame(&m, &mut s, shared),
            MessageType::Lock => on_lock(&m, &mut s, shared),
            MessageType::Annotation => on_annotation(&m, &mut s, shared),
            other => {
                let msg = format!("clients may not send {other}");
                let _ = send(&mut s, MessageType::Error, error_payload("ProtocolError", &msg));
                break;
            }
        };
        let (t, payload) =
            reply.unwrap_or_else(|(kind, msg)| (MessageType::Error, error_payload(kind, &msg)));
        send(&mut s, t, payload)?;
    }
    let _ = stream.shutdown(Shutdown::Both);
    Ok(())
}

type Reply = Result<(MessageType, Vec<u8>), (&'static str, String)>;

fn request(m: &FrameMessage) -> Result<BTreeMap<String, String>, (&'static str, String)> {
    textfmt::parse_key_values(&m.text()).map_err(|e| ("BadRequest", e))
}

fn field<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, (&'static str, String)> {
    textfmt::take(map, key).map_err(|e| ("BadRequest", e))
}

fn on_frame(m: &FrameMessage, s: &mut ClientSession, shared: &Shared) -> Reply {
    let req = request(m)?;
    let view_id = field(&req, "view_id")?;
    let kind: FrameKind = field(&req, "kind")?.parse().map_err(|e| sim_error(&e))?;
    let pgm = shared
        .session
        .frame(view_id, kind)
        .and_then(|img| img.to_pgm().map_err(SimulatorError::from))
        .map_err(|e| sim_error(&e))?;
    let mut metadata = BTreeMap::new();
    metadata.insert("view_id".to_string(), view_id.to_string());
    metadata.insert("timestamp".to_string(), s.clock.to_string());
    metadata.insert("camera".to_string(), kind.camera().to_string());
    metadata.insert("kind".to_string(), kind.to_string());
    s.clock += SECONDS_PER_ACQUISITION;
    Ok((MessageType::Frame, FramePayload { metadata, pgm }.encode()))
}

fn on_lock(m: &FrameMessage, s: &mut ClientSession, shared: &Shared) -> Reply {
    let req = request(m)?;
    let view_id = field(&req, "view_id")?;
    let marker = match req.get("marker").map(String::as_str) {
        None | Some("on") => true,
        Some("off") => false,
        Some(other) => return Err(("BadRequest", format!("marker must be on or off, not {other:?}"))),
    };
    let t = s.clock;
    s.clock += SECONDS_PER_ACQUISITION;
    let record = shared
        .session
        .lock(view_id, t, marker)
        .map_err(|e| sim_error(&e))?;
    shared
        .calibrations
        .write()
        .expect("calibration lock poisoned")
        .insert(view_id.to_string(), record.clone());
    // annotations made against the previous lock are stale
    s.annotations.retain(|a| a.view_id != view_id);
    Ok((MessageType::Ack, record.to_text().into_bytes()))
}

fn on_annotation(m: &FrameMessage, s: &mut ClientSession, shared: &Shared) -> Reply {
    let new = read_annotations(&m.text()).map_err(|e| guidance_error(&e))?;
    let cam = shared
        .session
        .rig
        .xray_device_camera()
        .map_err(|e| sim_error(&e))?;
    let views: BTreeMap<String, (CalibrationRecord, _)> = {
        let calibrations = shared.calibrations.read().expect("calibration lock poisoned");
        let mut views = BTreeMap::new();
        for a in s.annotations.iter().chain(&new) {
            let Some(rec) = calibrations.get(&a.view_id) else {
                return Err(("NotLocked", format!("view {} has not been locked", a.view_id)));
            };
            views.insert(a.view_id.clone(), (rec.clone(), cam));
        }
        views
    };
    let mut all = s.annotations.clone();
    all.extend(new);
    let geometry = build_geometry(&all, &views).map_err(|e| guidance_error(&e))?;
    s.annotations = all;
    Ok((MessageType::Geometry, geometry.to_text().into_bytes()))
}

fn fiducial_kind(e: &FiducialError) -> &'static str {
    match e {
        FiducialError::NotFound => "NotFound",
        FiducialError::Ambiguous(_) => "Ambiguous",
        FiducialError::Degenerate(_) => "Degenerate",
        _ => "InvalidInput",
    }
}

fn guidance_error(e: &GuidanceError) -> (&'static str, String) {
    let kind = match e {
        GuidanceError::NearParallel { .. } => "NearParallel",
        GuidanceError::ParallelPlanes { .. } => "ParallelPlanes",
        GuidanceError::DegenerateLine => "DegenerateLine",
        GuidanceError::Parse(_) => "BadRequest",
        _ => "InvalidInput",
    };
    (kind, e.to_string())
}

fn sim_error(e: &SimulatorError) -> (&'static str, String) {
    let kind = match e {
        SimulatorError::Fiducial(f) | SimulatorError::Tracking(TrackingError::Fiducial(f)) => {
            fiducial_kind(f)
        }
        SimulatorError::Tracking(TrackingError::StaleMarker { .. }) => "StaleMarker",
        SimulatorError::Guidance(g) => return guidance_error(g),
        SimulatorError::Config(_) => "BadRequest",
        _ => "Failed",
    };
    (kind, e.to_string())
}
