use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::{read_message, write_message, FrameMessage, MessageType, StreamError, DEFAULT_TIMEOUT};

/// A connected client that numbers its own requests.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    next: u64,
}

impl Client {
    pub fn connect(address: impl ToSocketAddrs, timeout: Duration) -> Result<Self, StreamError> {
        let stream = TcpStream::connect(address)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            next: 0,
        })
    }

    /// Sends a message with the next sequence number.
    pub fn send(&mut self, message_type: MessageType, payload: Vec<u8>) -> Result<FrameMessage, StreamError> {
        let m = FrameMessage::new(message_type, self.next, payload);
        self.send_raw(&m)?;
        self.next += 1;
        Ok(m)
    }

    /// Sends exactly `m`, sequence included.
    pub fn send_raw(&mut self, m: &FrameMessage) -> Result<(), StreamError> {
        write_message(&mut self.writer, m)
    }

    pub fn receive(&mut self) -> Result<FrameMessage, StreamError> {
        read_message(&mut self.reader)?.ok_or(StreamError::Closed)
    }

    pub fn request(
        &mut self,
        message_type: MessageType,
        payload: Vec<u8>,
    ) -> Result<FrameMessage, StreamError> {
        self.send(message_type, payload)?;
        self.receive()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptEntry {
    pub request: FrameMessage,
    pub reply: FrameMessage,
    /// Time from sending the request to receiving the whole reply.
    pub latency: Duration,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

/// Sends the script one message at a time, waiting for each reply.
pub fn client_roundtrip(
    address: impl ToSocketAddrs,
    script: &[(MessageType, Vec<u8>)],
) -> Result<Transcript, StreamError> {
    client_roundtrip_with_timeout(address, script, DEFAULT_TIMEOUT)
}

pub fn client_roundtrip_with_timeout(
    address: impl ToSocketAddrs,
    script: &[(MessageType, Vec<u8>)],
    timeout: Duration,
) -> Result<Transcript, StreamError> {
    let mut client = Client::connect(address, timeout)?;
    let mut transcript = Transcript::default();
    for (t, payload) in script {
        let start = Instant::now();
        let request = client.send(*t, payload.clone())?;
        let reply = client.receive()?;
        transcript.entries.push(TranscriptEntry {
            request,
            reply,
            latency: start.elapsed(),
        });
    }
    Ok(transcript)
}

/// Parses a request script: each message starts with a `> TYPE` line and
/// its payload is the following lines, each newline-terminated. Lines
/// starting with `#` before the first message are comments.
pub fn parse_script(text: &str) -> Result<Vec<(MessageType, Vec<u8>)>, StreamError> {
    let mut out: Vec<(MessageType, Vec<u8>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(name) = line.strip_prefix("> ") {
            let t = MessageType::from_name(name.trim()).ok_or_else(|| {
                StreamError::Protocol(format!("script line {}: unknown type {name:?}", i + 1))
            })?;
            out.push((t, Vec::new()));
        } else if let Some((_, payload)) = out.last_mut() {
            payload.extend_from_slice(line.as_bytes());
            payload.push(b'\n');
        } else if !(line.trim().is_empty() || line.starts_with('#')) {
            return Err(StreamError::Protocol(format!(
                "script line {}: payload before any message",
                i + 1
            )));
        }
    }
    Ok(out)
}
