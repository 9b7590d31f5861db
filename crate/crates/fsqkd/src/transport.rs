//! Ordered, reliable delivery of wire frames between the two endpoints.
//!
//! A transport moves whole frames; it neither inspects nor re-delimits
//! them (TCP uses the frame's own length prefix to find record
//! boundaries on the byte stream). Two implementations ship: an
//! in-process loopback pair for single-threaded sessions and tests, and
//! a TCP stream for two-process runs. Wrappers add verbatim transcript
//! recording (the passive-monitor view) and an optional per-frame delay
//! for latency experiments.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::wire::{decode_frame, encode_frame, payload_len, Message, Payload, HEADER_LEN, MAX_PAYLOAD};

/// One endpoint's view of an ordered frame pipe.
pub trait Transport {
    /// Queues or writes one complete frame.
    fn send(&mut self, frame: &[u8]) -> Result<()>;
    /// Blocks for the peer's next frame.
    fn recv(&mut self) -> Result<Vec<u8>>;
}

/// In-process transport half backed by channels.
pub struct Loopback {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
}

/// Builds a connected pair: frames sent on one half arrive on the other.
pub fn loopback_pair() -> (Loopback, Loopback) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (Loopback { tx: a_tx, rx: a_rx }, Loopback { tx: b_tx, rx: b_rx })
}

impl Transport for Loopback {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        self.tx
            .send(frame.to_vec())
            .map_err(|_| Error::Transport("peer endpoint dropped".into()))
    }

    fn recv(&mut self) -> Result<Vec<u8>> {
        self.rx.recv().map_err(|_| Error::Transport("peer endpoint dropped".into()))
    }
}

/// Frame pipe over a TCP stream.
pub struct Tcp {
    stream: TcpStream,
}

impl Tcp {
    /// Dials the peer, retrying for a few seconds so the two endpoint
    /// processes need not start in a fixed order.
    pub fn connect(addr: impl ToSocketAddrs + Clone) -> Result<Self> {
        let mut last = None;
        for _ in 0..50 {
            match TcpStream::connect(addr.clone()) {
                Ok(stream) => {
                    stream
                        .set_nodelay(true)
                        .map_err(|e| Error::Transport(format!("set_nodelay: {e}")))?;
                    return Ok(Tcp { stream });
                }
                Err(e) => {
                    last = Some(e);
                    std::thread::sleep(Duration::from_millis(100));
                }
            }
        }
        Err(Error::Transport(format!("connect failed: {}", last.unwrap())))
    }

    /// Binds `addr` and accepts exactly one peer.
    pub fn listen(addr: impl ToSocketAddrs) -> Result<Self> {
        let listener =
            TcpListener::bind(addr).map_err(|e| Error::Transport(format!("bind: {e}")))?;
        Self::accept_on(&listener)
    }

    /// Accepts one peer on an already-bound listener.
    pub fn accept_on(listener: &TcpListener) -> Result<Self> {
        let (stream, _) =
            listener.accept().map_err(|e| Error::Transport(format!("accept: {e}")))?;
        stream.set_nodelay(true).map_err(|e| Error::Transport(format!("set_nodelay: {e}")))?;
        Ok(Tcp { stream })
    }
}

impl Transport for Tcp {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        self.stream
            .write_all(frame)
            .and_then(|()| self.stream.flush())
            .map_err(|e| Error::Transport(format!("send: {e}")))
    }

    fn recv(&mut self) -> Result<Vec<u8>> {
        let mut header = [0u8; HEADER_LEN];
        self.stream
            .read_exact(&mut header)
            .map_err(|e| Error::Transport(format!("recv header: {e}")))?;
        let plen = payload_len(header[0..4].try_into().unwrap());
        if plen > MAX_PAYLOAD {
            return Err(Error::Transport(format!("peer announced {plen}-byte payload")));
        }
        let mut frame = vec![0u8; HEADER_LEN + plen];
        frame[..HEADER_LEN].copy_from_slice(&header);
        self.stream
            .read_exact(&mut frame[HEADER_LEN..])
            .map_err(|e| Error::Transport(format!("recv payload: {e}")))?;
        Ok(frame)
    }
}

/// Wrapper that copies every frame, both directions, into a transcript —
/// exactly what a passive monitor of the public channel would capture.
pub struct Recorder<T> {
    inner: T,
    transcript: Vec<u8>,
}

impl<T: Transport> Recorder<T> {
    pub fn new(inner: T) -> Self {
        Recorder { inner, transcript: Vec::new() }
    }

    /// The verbatim concatenated frames seen so far, in local order.
    pub fn transcript(&self) -> &[u8] {
        &self.transcript
    }

    pub fn into_transcript(self) -> Vec<u8> {
        self.transcript
    }
}

impl<T: Transport> Transport for Recorder<T> {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        self.transcript.extend_from_slice(frame);
        self.inner.send(frame)
    }

    fn recv(&mut self) -> Result<Vec<u8>> {
        let frame = self.inner.recv()?;
        self.transcript.extend_from_slice(&frame);
        Ok(frame)
    }
}

/// Wrapper that sleeps before each send, for latency experiments.
pub struct Throttled<T> {
    inner: T,
    delay: Duration,
}

impl<T: Transport> Throttled<T> {
    pub fn new(inner: T, delay: Duration) -> Self {
        Throttled { inner, delay }
    }
}

impl<T: Transport> Transport for Throttled<T> {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.inner.send(frame)
    }

    fn recv(&mut self) -> Result<Vec<u8>> {
        self.inner.recv()
    }
}

/// Typed message channel over a transport: stamps outgoing frames with
/// the session id and a per-sender sequence number, and validates both on
/// receipt. A received ABORT surfaces as an error; any violation answers
/// the peer with an ABORT before failing locally.
pub struct Chan<T> {
    transport: T,
    session: u64,
    send_seq: u32,
    recv_seq: u32,
}

impl<T: Transport> Chan<T> {
    pub fn new(transport: T, session: u64) -> Self {
        Chan { transport, session, send_seq: 0, recv_seq: 0 }
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn send(&mut self, payload: Payload) -> Result<()> {
        let frame = encode_frame(&Message { session: self.session, seq: self.send_seq, payload })?;
        self.transport.send(&frame)?;
        self.send_seq += 1;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Payload> {
        let frame = self.transport.recv()?;
        let msg = match decode_frame(&frame) {
            Ok(m) => m,
            Err(e) => return Err(self.abort(&format!("malformed frame: {e}"))),
        };
        // An abort is a terminal diagnostic, not a protocol step: honor
        // it before header validation, or the abort explaining a header
        // problem would itself be rejected for that same problem.
        if let Payload::Abort { reason } = msg.payload {
            return Err(Error::Abort(format!("peer aborted: {reason}")));
        }
        if msg.session != self.session {
            return Err(self.abort(&format!(
                "session id {:#x} does not match {:#x}",
                msg.session, self.session
            )));
        }
        if msg.seq != self.recv_seq {
            return Err(self.abort(&format!(
                "sequence {} arrived where {} was expected",
                msg.seq, self.recv_seq
            )));
        }
        self.recv_seq += 1;
        Ok(msg.payload)
    }

    /// Notifies the peer (best effort) and returns the local error.
    pub fn abort(&mut self, reason: &str) -> Error {
        let _ = self.send(Payload::Abort { reason: reason.into() });
        Error::Abort(reason.into())
    }

    /// Abort for a message that arrived out of protocol order.
    pub fn unexpected(&mut self, got: &Payload, wanted: &str) -> Error {
        let name = got.kind_name();
        self.abort(&format!("{name} arrived where {wanted} was expected"))
    }

    pub fn inner(&self) -> &T {
        &self.transport
    }

    pub fn into_inner(self) -> T {
        self.transport
    }
}
