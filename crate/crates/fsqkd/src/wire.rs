//! Public-channel message encoding.
//!
//! Every message travels as one frame:
//!
//! ```text
//! +---------+------+---------+------------+---------+-----------+
//! | 4B len  | 1B   | 2B      | 8B         | 4B      | len bytes |
//! | payload | kind | version | session id | seq no  | payload   |
//! +---------+------+---------+------------+---------+-----------+
//! ```
//!
//! All fixed-width integers are big-endian. Variable-length integers are
//! unsigned LEB128. Slot lists are delta-encoded varints (first absolute,
//! then gaps ≥ 1), which keeps a sparse list over a million slots to a
//! couple of bytes per entry. Bit strings carry a varint bit length
//! followed by MSB-first packed bytes with zero padding.
//!
//! The conversation never carries raw key-bit values: only slot indices,
//! basis choices, block parities, seeds, budget figures, and the
//! deliberately sacrificed key-check bits.

use crate::bits::BitVec;
use crate::error::{Error, Result};

/// Current wire protocol version; frames with any other version are rejected.
pub const WIRE_VERSION: u16 = 1;

/// Fixed bytes before the payload: length + kind + version + session + seq.
pub const HEADER_LEN: usize = 4 + 1 + 2 + 8 + 4;

/// Longest payload a peer is willing to decode (16 MiB).
pub const MAX_PAYLOAD: usize = 16 << 20;

/// One block of a reconciliation round, in that round's shuffled
/// coordinates. `end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockRef {
    pub round: u32,
    pub start: u32,
    pub end: u32,
}

/// The secrecy-budget figures Alice discloses alongside her extraction
/// spec, so Bob can independently re-derive and veto the key length.
/// Real-valued entries are exchanged as exact IEEE-754 bit patterns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetEcho {
    pub n: u64,
    pub multi_photon: f64,
    pub intercept_resend: f64,
    pub bias: f64,
    pub ec_leak_bits: u64,
    pub safety: f64,
}

/// Message payloads, one per conversation step.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Bob → Alice: slots where exactly one detector fired, plus how many
    /// slots were dropped for multiple firings.
    DetectedSlots { slots: Vec<u32>, multi_count: u32 },
    /// Alice → Bob: her preparation basis for each announced slot, in
    /// announcement order (0 = rectilinear, 1 = diagonal).
    Bases { bases: BitVec },
    /// Bob → Alice: the announced slots where his measurement basis
    /// matched; both sides keep exactly these.
    MatchedSlots { slots: Vec<u32> },
    /// Bob → Alice: blocks whose parities he wants.
    ParityRequest { blocks: Vec<BlockRef> },
    /// Alice → Bob: one parity bit per requested block, request order.
    /// These bits are the error-correction leakage.
    ParityReply { parities: BitVec },
    /// Alice → Bob: the permutation seed opening a reconciliation round.
    ShuffleSeed { round: u32, seed: u64 },
    /// Bob → Alice: a round's initial mismatch count and the number of
    /// bits he flipped while clearing it (backtracking included).
    RoundDone { round: u32, mismatches: u32, corrected: u32 },
    /// Alice → Bob: final key length, the subset-selection seed, and the
    /// budget she computed it from.
    PaSpec { f_secret: u32, pa_seed: [u8; 16], budget: BudgetEcho },
    /// Either direction: the sacrificed leading bits of the final key.
    KeyCheck { bits: BitVec },
    /// Either direction: unrecoverable protocol failure.
    Abort { reason: String },
}

impl Payload {
    pub fn kind(&self) -> u8 {
        match self {
            Payload::DetectedSlots { .. } => 1,
            Payload::Bases { .. } => 2,
            Payload::MatchedSlots { .. } => 3,
            Payload::ParityRequest { .. } => 4,
            Payload::ParityReply { .. } => 5,
            Payload::ShuffleSeed { .. } => 6,
            Payload::RoundDone { .. } => 7,
            Payload::PaSpec { .. } => 8,
            Payload::KeyCheck { .. } => 9,
            Payload::Abort { .. } => 10,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::DetectedSlots { .. } => "DETECTED_SLOTS",
            Payload::Bases { .. } => "BASES",
            Payload::MatchedSlots { .. } => "MATCHED_SLOTS",
            Payload::ParityRequest { .. } => "PARITY_REQUEST",
            Payload::ParityReply { .. } => "PARITY_REPLY",
            Payload::ShuffleSeed { .. } => "SHUFFLE_SEED",
            Payload::RoundDone { .. } => "ROUND_DONE",
            Payload::PaSpec { .. } => "PA_SPEC",
            Payload::KeyCheck { .. } => "KEYCHECK",
            Payload::Abort { .. } => "ABORT",
        }
    }
}

/// A full message: routing header plus payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub session: u64,
    pub seq: u32,
    pub payload: Payload,
}

// ===== primitive writers =====

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn put_slot_list(out: &mut Vec<u8>, slots: &[u32]) -> Result<()> {
    put_varint(out, slots.len() as u64);
    let mut prev: Option<u32> = None;
    for &s in slots {
        match prev {
            None => put_varint(out, u64::from(s)),
            Some(p) => {
                if s <= p {
                    return Err(Error::Wire(format!(
                        "slot list not strictly increasing at {s} after {p}"
                    )));
                }
                put_varint(out, u64::from(s - p));
            }
        }
        prev = Some(s);
    }
    Ok(())
}

fn put_bits(out: &mut Vec<u8>, bits: &BitVec) {
    put_varint(out, bits.len() as u64);
    out.extend_from_slice(&bits.to_bytes_msb());
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    put_varint(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

// ===== primitive readers =====

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Wire("payload truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        let mut shift = 0u32;
        loop {
            let byte = self.take(1)?[0];
            if shift == 63 && byte > 1 {
                return Err(Error::Wire("varint overflows 64 bits".into()));
            }
            v |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
            shift += 7;
            if shift > 63 {
                return Err(Error::Wire("varint too long".into()));
            }
        }
    }

    fn varint_u32(&mut self) -> Result<u32> {
        let v = self.varint()?;
        u32::try_from(v).map_err(|_| Error::Wire(format!("value {v} exceeds u32")))
    }

    fn u64_be(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_bits(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64_be()?))
    }

    fn slot_list(&mut self) -> Result<Vec<u32>> {
        let count = self.varint()? as usize;
        // A frame holds at least one byte per encoded slot.
        if count > self.buf.len() {
            return Err(Error::Wire("slot count exceeds frame size".into()));
        }
        let mut slots = Vec::with_capacity(count);
        let mut prev: Option<u32> = None;
        for _ in 0..count {
            let v = self.varint_u32()?;
            let slot = match prev {
                None => v,
                Some(p) => {
                    if v == 0 {
                        return Err(Error::Wire("zero gap in slot list".into()));
                    }
                    p.checked_add(v)
                        .ok_or_else(|| Error::Wire("slot index overflows u32".into()))?
                }
            };
            slots.push(slot);
            prev = Some(slot);
        }
        Ok(slots)
    }

    fn bits(&mut self) -> Result<BitVec> {
        let len = self.varint()? as usize;
        let bytes = self.take(len.div_ceil(8))?;
        // Reject dirty padding so decode(encode(x)) is the only preimage.
        if len % 8 != 0 {
            let pad_mask = 0xffu8 >> (len % 8);
            if bytes[bytes.len() - 1] & pad_mask != 0 {
                return Err(Error::Wire("nonzero padding in bit string".into()));
            }
        }
        Ok(BitVec::from_bytes_msb(bytes, len))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.varint()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Wire("string is not UTF-8".into()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Wire(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

// ===== frame encode/decode =====

/// Encodes a message into one self-delimiting frame.
pub fn encode_frame(msg: &Message) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    match &msg.payload {
        Payload::DetectedSlots { slots, multi_count } => {
            put_slot_list(&mut payload, slots)?;
            put_varint(&mut payload, u64::from(*multi_count));
        }
        Payload::Bases { bases } => put_bits(&mut payload, bases),
        Payload::MatchedSlots { slots } => put_slot_list(&mut payload, slots)?,
        Payload::ParityRequest { blocks } => {
            put_varint(&mut payload, blocks.len() as u64);
            for b in blocks {
                if b.start >= b.end {
                    return Err(Error::Wire(format!(
                        "empty block {}..{} in parity request",
                        b.start, b.end
                    )));
                }
                put_varint(&mut payload, u64::from(b.round));
                put_varint(&mut payload, u64::from(b.start));
                put_varint(&mut payload, u64::from(b.end));
            }
        }
        Payload::ParityReply { parities } => put_bits(&mut payload, parities),
        Payload::ShuffleSeed { round, seed } => {
            put_varint(&mut payload, u64::from(*round));
            payload.extend_from_slice(&seed.to_be_bytes());
        }
        Payload::RoundDone { round, mismatches, corrected } => {
            put_varint(&mut payload, u64::from(*round));
            put_varint(&mut payload, u64::from(*mismatches));
            put_varint(&mut payload, u64::from(*corrected));
        }
        Payload::PaSpec { f_secret, pa_seed, budget } => {
            payload.extend_from_slice(&f_secret.to_be_bytes());
            payload.extend_from_slice(pa_seed);
            payload.extend_from_slice(&budget.n.to_be_bytes());
            payload.extend_from_slice(&budget.multi_photon.to_bits().to_be_bytes());
            payload.extend_from_slice(&budget.intercept_resend.to_bits().to_be_bytes());
            payload.extend_from_slice(&budget.bias.to_bits().to_be_bytes());
            payload.extend_from_slice(&budget.ec_leak_bits.to_be_bytes());
            payload.extend_from_slice(&budget.safety.to_bits().to_be_bytes());
        }
        Payload::KeyCheck { bits } => put_bits(&mut payload, bits),
        Payload::Abort { reason } => put_string(&mut payload, reason),
    }

    if payload.len() > MAX_PAYLOAD {
        return Err(Error::Wire(format!("payload of {} bytes exceeds cap", payload.len())));
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.push(msg.payload.kind());
    frame.extend_from_slice(&WIRE_VERSION.to_be_bytes());
    frame.extend_from_slice(&msg.session.to_be_bytes());
    frame.extend_from_slice(&msg.seq.to_be_bytes());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

/// Payload length promised by a frame's first four bytes.
pub fn payload_len(prefix: [u8; 4]) -> usize {
    u32::from_be_bytes(prefix) as usize
}

/// Decodes one complete frame (header and payload, nothing more).
pub fn decode_frame(frame: &[u8]) -> Result<Message> {
    if frame.len() < HEADER_LEN {
        return Err(Error::Wire(format!("frame of {} bytes is shorter than header", frame.len())));
    }
    let plen = payload_len(frame[0..4].try_into().unwrap());
    if plen > MAX_PAYLOAD {
        return Err(Error::Wire(format!("payload of {plen} bytes exceeds cap")));
    }
    if frame.len() != HEADER_LEN + plen {
        return Err(Error::Wire(format!(
            "frame is {} bytes but header promises {}",
            frame.len(),
            HEADER_LEN + plen
        )));
    }
    let kind = frame[4];
    let version = u16::from_be_bytes(frame[5..7].try_into().unwrap());
    if version != WIRE_VERSION {
        return Err(Error::Wire(format!("unsupported wire version {version}")));
    }
    let session = u64::from_be_bytes(frame[7..15].try_into().unwrap());
    let seq = u32::from_be_bytes(frame[15..19].try_into().unwrap());

    let mut r = Reader::new(&frame[HEADER_LEN..]);
    let payload = match kind {
        1 => {
            let slots = r.slot_list()?;
            let multi_count = r.varint_u32()?;
            Payload::DetectedSlots { slots, multi_count }
        }
        2 => Payload::Bases { bases: r.bits()? },
        3 => Payload::MatchedSlots { slots: r.slot_list()? },
        4 => {
            let count = r.varint()? as usize;
            if count > r.buf.len() {
                return Err(Error::Wire("block count exceeds frame size".into()));
            }
            let mut blocks = Vec::with_capacity(count);
            for _ in 0..count {
                let round = r.varint_u32()?;
                let start = r.varint_u32()?;
                let end = r.varint_u32()?;
                if start >= end {
                    return Err(Error::Wire(format!(
                        "empty block {start}..{end} in parity request"
                    )));
                }
                blocks.push(BlockRef { round, start, end });
            }
            Payload::ParityRequest { blocks }
        }
        5 => Payload::ParityReply { parities: r.bits()? },
        6 => {
            let round = r.varint_u32()?;
            let seed = r.u64_be()?;
            Payload::ShuffleSeed { round, seed }
        }
        7 => {
            let round = r.varint_u32()?;
            let mismatches = r.varint_u32()?;
            let corrected = r.varint_u32()?;
            Payload::RoundDone { round, mismatches, corrected }
        }
        8 => {
            let f_secret = u32::from_be_bytes(r.take(4)?.try_into().unwrap());
            let pa_seed: [u8; 16] = r.take(16)?.try_into().unwrap();
            let budget = BudgetEcho {
                n: r.u64_be()?,
                multi_photon: r.f64_bits()?,
                intercept_resend: r.f64_bits()?,
                bias: r.f64_bits()?,
                ec_leak_bits: r.u64_be()?,
                safety: r.f64_bits()?,
            };
            Payload::PaSpec { f_secret, pa_seed, budget }
        }
        9 => Payload::KeyCheck { bits: r.bits()? },
        10 => Payload::Abort { reason: r.string()? },
        other => return Err(Error::Wire(format!("unknown message kind {other}"))),
    };
    r.finish()?;
    Ok(Message { session, seq, payload })
}

/// What a passive monitor of the public channel learns about the key:
/// totals of the only two payload classes that carry key-derived bits.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct TranscriptAudit {
    pub frames: usize,
    /// Parity bits disclosed in PARITY_REPLY messages.
    pub parity_bits: usize,
    /// Sacrificed key bits disclosed in KEYCHECK messages.
    pub keycheck_bits: usize,
    pub aborted: bool,
}

/// Scans a transcript (verbatim concatenated frames) and tallies every
/// key-derived bit that crossed the wire.
pub fn scan_transcript(mut transcript: &[u8]) -> Result<TranscriptAudit> {
    let mut audit = TranscriptAudit::default();
    while !transcript.is_empty() {
        if transcript.len() < HEADER_LEN {
            return Err(Error::Wire("transcript ends mid-header".into()));
        }
        let plen = payload_len(transcript[0..4].try_into().unwrap());
        let total = HEADER_LEN + plen;
        if transcript.len() < total {
            return Err(Error::Wire("transcript ends mid-frame".into()));
        }
        let msg = decode_frame(&transcript[..total])?;
        audit.frames += 1;
        match msg.payload {
            Payload::ParityReply { parities } => audit.parity_bits += parities.len(),
            Payload::KeyCheck { bits } => audit.keycheck_bits += bits.len(),
            Payload::Abort { .. } => audit.aborted = true,
            _ => {}
        }
        transcript = &transcript[total..];
    }
    Ok(audit)
}
