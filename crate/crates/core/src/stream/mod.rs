//! The intra-operative image link: a length-prefixed message protocol over
//! TCP, a frame server backed by a [`SimulatorSession`], and a scripted test
//! client.
//!
//! Every message on the wire is
//!
//! ```text
//! u32 BE  payload length (bytes, ≤ 2^24)
//! u8      message type (FRAME=1 LOCK=2 ANNOTATION=3 GEOMETRY=4 ACK=5 ERROR=6)
//! u64 BE  sequence number
//! ...     payload
//! ```
//!
//! See `docs/protocol.md` for the request and reply payloads.
//!
//! [`SimulatorSession`]: crate::simulator::SimulatorSession

mod client;
mod server;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

pub use client::{
    client_roundtrip, client_roundtrip_with_timeout, parse_script, Client, Transcript, TranscriptEntry,
};
pub use server::{serve, ServerHandle};

use crate::simulator::FrameKind;
use crate::textfmt;

/// Largest payload a message may carry.
pub const MAX_PAYLOAD: usize = 1 << 24;
/// Bytes before the payload.
pub const HEADER_LEN: usize = 13;
/// Reply timeout of the test client.
pub const DEFAULT_TIMEOUT: std::time::Duration = std::time::Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("cannot bind {address}: {source}")]
    Bind { address: String, source: io::Error },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("payload of {0} bytes exceeds the 2^24 limit")]
    PayloadTooLarge(usize),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("message truncated")]
    Truncated,
    #[error("sequence {got} where {expected} was expected")]
    Sequence { expected: u64, got: u64 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no reply within the timeout")]
    Timeout,
    #[error("connection closed")]
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageType {
    Frame = 1,
    Lock = 2,
    Annotation = 3,
    Geometry = 4,
    Ack = 5,
    Error = 6,
}

impl MessageType {
    pub const ALL: [MessageType; 6] = [
        MessageType::Frame,
        MessageType::Lock,
        MessageType::Annotation,
        MessageType::Geometry,
        MessageType::Ack,
        MessageType::Error,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageType::Frame => "FRAME",
            MessageType::Lock => "LOCK",
            MessageType::Annotation => "ANNOTATION",
            MessageType::Geometry => "GEOMETRY",
            MessageType::Ack => "ACK",
            MessageType::Error => "ERROR",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<u8> for MessageType {
    type Error = StreamError;

    fn try_from(v: u8) -> Result<Self, StreamError> {
        Self::ALL
            .into_iter()
            .find(|t| *t as u8 == v)
            .ok_or(StreamError::UnknownType(v))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameMessage {
    pub message_type: MessageType,
    pub sequence: u64,
    pub payload: Vec<u8>,
}

impl FrameMessage {
    pub fn new(message_type: MessageType, sequence: u64, payload: Vec<u8>) -> Self {
        Self {
            message_type,
            sequence,
            payload,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, StreamError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(StreamError::PayloadTooLarge(self.payload.len()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.push(self.message_type as u8);
        out.extend_from_slice(&self.sequence.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes one message from the front of `buf`; returns it with the
    /// number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Self, usize), StreamError> {
        if buf.len() < HEADER_LEN {
            return Err(StreamError::Truncated);
        }
        let (len, message_type, sequence) =
            parse_header(buf[..HEADER_LEN].try_into().expect("header length"))?;
        let end = HEADER_LEN + len;
        if buf.len() < end {
            return Err(StreamError::Truncated);
        }
        Ok((
            Self::new(message_type, sequence, buf[HEADER_LEN..end].to_vec()),
            end,
        ))
    }

    /// Payload as UTF-8 text (lossy).
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.payload).into_owned()
    }
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(usize, MessageType, u64), StreamError> {
    let len = u32::from_be_bytes(h[0..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(StreamError::PayloadTooLarge(len));
    }
    let message_type = MessageType::try_from(h[4])?;
    let sequence = u64::from_be_bytes(h[5..13].try_into().expect("8 bytes"));
    Ok((len, message_type, sequence))
}

/// Reads one message; `Ok(None)` on a clean end of stream between messages.
pub fn read_message(r: &mut impl Read) -> Result<Option<FrameMessage>, StreamError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(StreamError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(io_error(e)),
        }
    }
    let (len, message_type, sequence) = parse_header(&header)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => StreamError::Truncated,
        _ => io_error(e),
    })?;
    Ok(Some(FrameMessage::new(message_type, sequence, payload)))
}

pub fn write_message(w: &mut impl Write, m: &FrameMessage) -> Result<(), StreamError> {
    w.write_all(&m.encode()?)?;
    w.flush()?;
    Ok(())
}

fn io_error(e: io::Error) -> StreamError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => StreamError::Timeout,
        _ => StreamError::Io(e),
    }
}

/// `key=value` lines, the request format of FRAME and LOCK.
pub fn key_values(pairs: &[(&str, &str)]) -> Vec<u8> {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect::<String>()
        .into_bytes()
}

pub fn frame_request(view_id: &str, kind: FrameKind) -> Vec<u8> {
    key_values(&[("view_id", view_id), ("kind", kind.as_str())])
}

pub fn lock_request(view_id: &str, marker_present: bool) -> Vec<u8> {
    key_values(&[
        ("view_id", view_id),
        ("marker", if marker_present { "on" } else { "off" }),
    ])
}

/// FRAME reply: a metadata header, a blank line, then the PGM bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePayload {
    pub metadata: BTreeMap<String, String>,
    pub pgm: Vec<u8>,
}

impl FramePayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self
            .metadata
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect::<String>()
            .into_bytes();
        out.push(b'\n');
        out.extend_from_slice(&self.pgm);
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, StreamError> {
        let split = payload
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| StreamError::Protocol("FRAME payload lacks a metadata terminator".into()))?;
        let header = std::str::from_utf8(&payload[..split + 1])
            .map_err(|_| StreamError::Protocol("FRAME metadata is not UTF-8".into()))?;
        let metadata = textfmt::parse_key_values(header).map_err(StreamError::Protocol)?;
        Ok(Self {
            metadata,
            pgm: payload[split + 2..].to_vec(),
        })
    }
}

/// ERROR payload: `error=<kind>` and `message=<text>` lines.
pub fn error_payload(kind: &str, message: &str) -> Vec<u8> {
    let message = message.replace('\n', " ");
    key_values(&[("error", kind), ("message", &message)])
}

/// Error kind carried by an ERROR reply.
pub fn error_kind(m: &FrameMessage) -> Option<String> {
    if m.message_type != MessageType::Error {
        return None;
    }
    textfmt::parse_key_values(&m.text()).ok()?.get("error").cloned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_big_endian() {
        let m = FrameMessage::new(MessageType::Lock, 0x0102_0304_0506_0708, b"ab".to_vec());
        let bytes = m.encode().unwrap();
        assert_eq!(bytes, [0, 0, 0, 2, 2, 1, 2, 3, 4, 5, 6, 7, 8, b'a', b'b']);
        assert_eq!(FrameMessage::decode(&bytes).unwrap(), (m, 15));
    }

    #[test]
    fn limits_and_truncation() {
        let big = FrameMessage::new(MessageType::Frame, 0, vec![0; MAX_PAYLOAD + 1]);
        assert!(matches!(big.encode(), Err(StreamError::PayloadTooLarge(_))));
        let ok = FrameMessage::new(MessageType::Frame, 0, vec![7; MAX_PAYLOAD]);
        assert_eq!(ok.encode().unwrap().len(), HEADER_LEN + MAX_PAYLOAD);
        let bytes = FrameMessage::new(MessageType::Ack, 3, b"xyz".to_vec())
            .encode()
            .unwrap();
        assert!(matches!(
            FrameMessage::decode(&bytes[..14]),
            Err(StreamError::Truncated)
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            FrameMessage::decode(&bad),
            Err(StreamError::UnknownType(9))
        ));
        let mut huge = bytes;
        huge[0] = 2;
        assert!(matches!(
            FrameMessage::decode(&huge),
            Err(StreamError::PayloadTooLarge(_))
        ));
    }

    #[test]
    fn read_stops_cleanly_between_messages() {
        let mut bytes = FrameMessage::new(MessageType::Ack, 0, b"x".to_vec())
            .encode()
            .unwrap();
        bytes.extend(
            FrameMessage::new(MessageType::Error, 1, Vec::new())
                .encode()
                .unwrap(),
        );
        let mut r = bytes.as_slice();
        assert_eq!(read_message(&mut r).unwrap().unwrap().payload, b"x");
        assert_eq!(
            read_message(&mut r).unwrap().unwrap().message_type,
            MessageType::Error
        );
        assert!(read_message(&mut r).unwrap().is_none());
        let cut = FrameMessage::new(MessageType::Ack, 0, b"xyz".to_vec())
            .encode()
            .unwrap();
        assert!(matches!(
            read_message(&mut &cut[..5]),
            Err(StreamError::Truncated)
        ));
    }

    #[test]
    fn frame_payload_round_trip() {
        let mut metadata = BTreeMap::new();
        metadata.insert("view_id".to_string(), "view1".to_string());
        metadata.insert("camera".to_string(), "xray".to_string());
        // binary data may itself contain blank lines
        let p = FramePayload {
            metadata,
            pgm: b"P5\n\n\x00\x01".to_vec(),
        };
        assert_eq!(FramePayload::decode(&p.encode()).unwrap(), p);
    }
}
