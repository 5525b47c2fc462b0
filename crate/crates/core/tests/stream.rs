use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use fluorar::guidance::{build_geometry, Annotation, GuidanceGeometry};
use fluorar::simulator::{FrameKind, SceneConfig, SimulatorSession};
use fluorar::stream::{
    client_roundtrip, error_kind, frame_request, lock_request, parse_script, read_message, serve, Client,
    FrameMessage, FramePayload, MessageType, ServerHandle, Transcript,
};
use fluorar::tracking::CalibrationRecord;
use nalgebra::Vector2;
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn server(seed: u64) -> ServerHandle {
    serve(
        "127.0.0.1:0",
        SimulatorSession::new(SceneConfig::default(), seed).unwrap(),
    )
    .unwrap()
}

fn message_type() -> impl Strategy<Value = MessageType> {
    proptest::sample::select(MessageType::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn wire_round_trip(t in message_type(), seq in any::<u64>(), payload in proptest::collection::vec(any::<u8>(), 0..512)) {
        let m = FrameMessage::new(t, seq, payload);
        let bytes = m.encode().unwrap();
        let (back, used) = FrameMessage::decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(read_message(&mut bytes.as_slice()).unwrap(), Some(m));
    }
}

#[test]
fn frames_match_the_simulator_output() {
    let srv = server(1);
    let session = SimulatorSession::new(SceneConfig::default(), 1).unwrap();
    let mut client = Client::connect(srv.local_addr(), Duration::from_secs(5)).unwrap();
    for (i, (view, kind)) in [
        ("view1", FrameKind::Xray),
        ("view2", FrameKind::XrayMarker),
        ("view1", FrameKind::Rgb),
    ]
    .into_iter()
    .enumerate()
    {
        let reply = client
            .request(MessageType::Frame, frame_request(view, kind))
            .unwrap();
        assert_eq!(reply.message_type, MessageType::Frame);
        assert_eq!(reply.sequence, i as u64);
        let frame = FramePayload::decode(&reply.payload).unwrap();
        assert_eq!(frame.metadata["view_id"], view);
        assert_eq!(frame.metadata["camera"], kind.camera());
        assert_eq!(frame.metadata["timestamp"], format!("{}", i as f64));
        assert_eq!(frame.pgm, session.frame(view, kind).unwrap().to_pgm().unwrap());
    }
    srv.shutdown();
}

#[test]
fn lock_without_marker_reports_not_found() {
    let srv = server(2);
    let t = client_roundtrip(
        srv.local_addr(),
        &[(MessageType::Lock, lock_request("view1", false))],
    )
    .unwrap();
    assert_eq!(t.entries[0].reply.message_type, MessageType::Error);
    assert_eq!(error_kind(&t.entries[0].reply).as_deref(), Some("NotFound"));
    srv.shutdown();
}

#[test]
fn annotation_before_lock_is_refused_but_session_survives() {
    let srv = server(2);
    let a = Annotation::point("view1", Vector2::new(500.0, 500.0), 1).to_line() + "\n";
    let t = client_roundtrip(
        srv.local_addr(),
        &[
            (MessageType::Annotation, a.into_bytes()),
            (MessageType::Frame, frame_request("view1", FrameKind::Xray)),
        ],
    )
    .unwrap();
    assert_eq!(error_kind(&t.entries[0].reply).as_deref(), Some("NotLocked"));
    assert_eq!(t.entries[1].reply.message_type, MessageType::Frame);
    srv.shutdown();
}

#[test]
fn sequence_gap_closes_only_that_session() {
    let srv = server(3);
    let mut bad = Client::connect(srv.local_addr(), Duration::from_secs(5)).unwrap();
    bad.send_raw(&FrameMessage::new(
        MessageType::Frame,
        1,
        frame_request("view1", FrameKind::Xray),
    ))
    .unwrap();
    let reply = bad.receive().unwrap();
    assert_eq!(error_kind(&reply).as_deref(), Some("ProtocolError"));
    assert!(bad.receive().is_err());
    // a client sending server-only messages is cut off as well
    let mut rude = Client::connect(srv.local_addr(), Duration::from_secs(5)).unwrap();
    assert_eq!(
        error_kind(&rude.request(MessageType::Ack, Vec::new()).unwrap()).as_deref(),
        Some("ProtocolError")
    );
    let ok = client_roundtrip(
        srv.local_addr(),
        &[(MessageType::Frame, frame_request("view2", FrameKind::Rgb))],
    )
    .unwrap();
    assert_eq!(ok.entries[0].reply.message_type, MessageType::Frame);
    srv.shutdown();
}

#[test]
fn empty_script_and_latency() {
    let srv = server(4);
    assert_eq!(
        client_roundtrip(srv.local_addr(), &[]).unwrap(),
        Transcript::default()
    );
    let t = client_roundtrip(
        srv.local_addr(),
        &[(MessageType::Frame, frame_request("view1", FrameKind::Xray))],
    )
    .unwrap();
    assert!(t.entries[0].latency > Duration::ZERO);
    srv.shutdown();
}

fn bead_annotation(session: &SimulatorSession, view: &str, bead: usize) -> Annotation {
    let g = session.gantry_deg(view).unwrap();
    let px = session
        .rig
        .xray_camera_at(g)
        .project(&session.rig.phantom.beads[bead].position)
        .unwrap();
    Annotation::point(view, px, bead as u32 + 1)
}

#[test]
fn server_geometry_equals_the_library_call() {
    let srv = server(5);
    let session = SimulatorSession::new(SceneConfig::default(), 5).unwrap();
    let mut records = BTreeMap::new();
    {
        let mut c = Client::connect(srv.local_addr(), Duration::from_secs(5)).unwrap();
        for v in ["view1", "view2"] {
            let ack = c.request(MessageType::Lock, lock_request(v, true)).unwrap();
            assert_eq!(ack.message_type, MessageType::Ack, "{}", ack.text());
            records.insert(v.to_string(), CalibrationRecord::from_text(&ack.text()).unwrap());
        }
    }
    // two clients annotate the same bead in both views, in opposite order
    let a1 = bead_annotation(&session, "view1", 2);
    let a2 = bead_annotation(&session, "view2", 2);
    let mut points = Vec::new();
    for order in [[&a1, &a2], [&a2, &a1]] {
        let mut c = Client::connect(srv.local_addr(), Duration::from_secs(5)).unwrap();
        let mut last = None;
        for a in order {
            last = Some(
                c.request(MessageType::Annotation, (a.to_line() + "\n").into_bytes())
                    .unwrap(),
            );
        }
        let reply = last.unwrap();
        assert_eq!(reply.message_type, MessageType::Geometry, "{}", reply.text());
        let g = GuidanceGeometry::from_text(&reply.text()).unwrap();
        assert_eq!(g.points.len(), 1);
        points.push(g.points[0]);
    }
    assert!((points[0].position - points[1].position).norm() < 1e-9);

    let cam = session.rig.xray_device_camera().unwrap();
    let views: BTreeMap<_, _> = records.into_iter().map(|(k, r)| (k, (r, cam))).collect();
    let direct = build_geometry(&[a1, a2], &views).unwrap();
    assert!((direct.points[0].position - points[0].position).norm() < 1e-9);
    srv.shutdown();
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Replies in text form: textual payloads verbatim, frame images by digest.
fn render(t: &Transcript) -> String {
    let mut out = String::new();
    for e in &t.entries {
        let r = &e.reply;
        out += &format!(
            "< {} seq={} bytes={}\n",
            r.message_type,
            r.sequence,
            r.payload.len()
        );
        if r.message_type == MessageType::Frame {
            let f = FramePayload::decode(&r.payload).unwrap();
            for (k, v) in &f.metadata {
                out += &format!("{k}={v}\n");
            }
            out += &format!("pgm sha256={:x}\n", Sha256::digest(&f.pgm));
        } else {
            out += &r.text();
        }
    }
    out
}

#[test]
fn golden_script_replays_byte_identically() {
    let script =
        parse_script(&std::fs::read_to_string(golden_dir().join("session.script")).unwrap()).unwrap();
    let srv = server(7);
    let first = client_roundtrip(srv.local_addr(), &script).unwrap();
    let second = client_roundtrip(srv.local_addr(), &script).unwrap();
    srv.shutdown();
    for (a, b) in first.entries.iter().zip(&second.entries) {
        assert_eq!(a.reply, b.reply);
    }
    let text = render(&first);
    let path = golden_dir().join("session.golden");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file missing; rerun with UPDATE_GOLDEN=1");
    assert_eq!(text, expected);
}
