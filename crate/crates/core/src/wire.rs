//! Datagram protocol between the capture side, the control side and the robot.
//!
//! Every packet is a 12-byte header followed by a kind-specific payload:
//!
//! ```text
//! "GBOT" | version u8 (1) | kind u8 | seq u32 | payload_len u16 | payload
//! ```
//!
//! Integers are little-endian and reals are IEEE-754 binary32.

use std::collections::HashMap;
use std::net::{SocketAddr, UdpSocket};

use thiserror::Error;

use crate::command_map::Verb;
use crate::raster::BinFrame;

pub const MAGIC: [u8; 4] = *b"GBOT";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
pub const MAX_PAYLOAD: usize = 1024;
/// Packed frame bytes per chunk.
pub const CHUNK_DATA: usize = 1000;
pub const FRAME_CHUNK_FIXED: usize = 12;
pub const REASSEMBLY_TIMEOUT_MS: u64 = 500;

pub const PORT_FRAMES: u16 = 9101;
pub const PORT_COMMANDS: u16 = 9102;
pub const PORT_STATE: u16 = 9103;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLarge(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown packet kind {0:#04x}")]
    UnknownKind(u8),
    #[error("length mismatch: declared {declared}, expected {expected}")]
    LengthMismatch { declared: usize, expected: usize },
    #[error("truncated: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },
    #[error("invalid field: {0}")]
    InvalidField(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameChunk {
    pub frame_id: u32,
    pub chunk_idx: u16,
    pub chunk_cnt: u16,
    pub width: u16,
    pub height: u16,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMsg {
    pub frame_id: u32,
    /// `None` is sent as 0xFF.
    pub label: Option<u8>,
    pub distance: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmdMsg {
    pub verb: Verb,
    pub magnitude: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMsg {
    pub x: f32,
    pub y: f32,
    pub theta: f32,
    pub grip: bool,
    pub tick: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PacketBody {
    FrameChunk(FrameChunk),
    Class(ClassMsg),
    Cmd(CmdMsg),
    State(StateMsg),
}

impl PacketBody {
    pub fn kind(&self) -> u8 {
        match self {
            PacketBody::FrameChunk(_) => 0x01,
            PacketBody::Class(_) => 0x02,
            PacketBody::Cmd(_) => 0x03,
            PacketBody::State(_) => 0x04,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub seq: u32,
    pub body: PacketBody,
}

pub fn encode_packet(p: &Packet) -> Result<Vec<u8>, WireError> {
    let mut payload = Vec::with_capacity(32);
    match &p.body {
        PacketBody::FrameChunk(c) => {
            payload.extend_from_slice(&c.frame_id.to_le_bytes());
            payload.extend_from_slice(&c.chunk_idx.to_le_bytes());
            payload.extend_from_slice(&c.chunk_cnt.to_le_bytes());
            payload.extend_from_slice(&c.width.to_le_bytes());
            payload.extend_from_slice(&c.height.to_le_bytes());
            payload.extend_from_slice(&c.data);
        }
        PacketBody::Class(c) => {
            payload.extend_from_slice(&c.frame_id.to_le_bytes());
            payload.push(c.label.unwrap_or(0xFF));
            payload.extend_from_slice(&c.distance.to_le_bytes());
        }
        PacketBody::Cmd(c) => {
            payload.push(c.verb.code());
            payload.extend_from_slice(&c.magnitude.to_le_bytes());
        }
        PacketBody::State(s) => {
            payload.extend_from_slice(&s.x.to_le_bytes());
            payload.extend_from_slice(&s.y.to_le_bytes());
            payload.extend_from_slice(&s.theta.to_le_bytes());
            payload.push(s.grip as u8);
            payload.extend_from_slice(&s.tick.to_le_bytes());
        }
    }
    if payload.len() > MAX_PAYLOAD {
        return Err(WireError::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(p.body.kind());
    out.extend_from_slice(&p.seq.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        // Callers check the payload length up front.
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        a
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
}

/// Decodes one datagram. Total on arbitrary input: never panics.
pub fn decode_packet(bytes: &[u8]) -> Result<Packet, WireError> {
    let magic_len = bytes.len().min(4);
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(WireError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(WireError::TruncatedPayload { needed: HEADER_LEN, available: bytes.len() });
    }
    if bytes[4] != VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    let kind = bytes[5];
    let seq = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]);
    let declared = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    let expected = match kind {
        0x01 => None,
        0x02 => Some(9),
        0x03 => Some(5),
        0x04 => Some(17),
        other => return Err(WireError::UnknownKind(other)),
    };
    match expected {
        Some(e) if declared != e => return Err(WireError::LengthMismatch { declared, expected: e }),
        None if declared < FRAME_CHUNK_FIXED => {
            return Err(WireError::LengthMismatch { declared, expected: FRAME_CHUNK_FIXED })
        }
        None if declared > MAX_PAYLOAD => return Err(WireError::PayloadTooLarge(declared)),
        _ => {}
    }
    let available = bytes.len() - HEADER_LEN;
    if available < declared {
        return Err(WireError::TruncatedPayload { needed: declared, available });
    }
    if available > declared {
        return Err(WireError::LengthMismatch { declared, expected: available });
    }
    let mut r = Reader { buf: &bytes[HEADER_LEN..], pos: 0 };
    let body = match kind {
        0x01 => {
            let frame_id = r.u32();
            let chunk_idx = r.u16();
            let chunk_cnt = r.u16();
            let width = r.u16();
            let height = r.u16();
            if chunk_cnt == 0 || chunk_idx >= chunk_cnt {
                return Err(WireError::InvalidField("chunk index"));
            }
            if width == 0 || height == 0 {
                return Err(WireError::InvalidField("frame dimensions"));
            }
            let data = r.buf[r.pos..].to_vec();
            PacketBody::FrameChunk(FrameChunk { frame_id, chunk_idx, chunk_cnt, width, height, data })
        }
        0x02 => {
            let frame_id = r.u32();
            let label = match r.u8() {
                0xFF => None,
                l => Some(l),
            };
            PacketBody::Class(ClassMsg { frame_id, label, distance: r.f32() })
        }
        0x03 => {
            let verb = Verb::from_code(r.u8()).ok_or(WireError::InvalidField("verb"))?;
            PacketBody::Cmd(CmdMsg { verb, magnitude: r.f32() })
        }
        _ => {
            let (x, y, theta) = (r.f32(), r.f32(), r.f32());
            let grip = match r.u8() {
                0 => false,
                1 => true,
                _ => return Err(WireError::InvalidField("grip")),
            };
            PacketBody::State(StateMsg { x, y, theta, grip, tick: r.u32() })
        }
    };
    Ok(Packet { seq, body })
}

/// Splits a binary frame into chunks of at most [`CHUNK_DATA`] packed bytes.
pub fn chunk_frame(bin: &BinFrame, frame_id: u32) -> Vec<FrameChunk> {
    let packed = bin.pack();
    let cnt = packed.len().div_ceil(CHUNK_DATA);
    packed
        .chunks(CHUNK_DATA)
        .enumerate()
        .map(|(i, slice)| FrameChunk {
            frame_id,
            chunk_idx: i as u16,
            chunk_cnt: cnt as u16,
            width: bin.width() as u16,
            height: bin.height() as u16,
            data: slice.to_vec(),
        })
        .collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReassemblyError {
    #[error("chunks of frame {0} disagree on geometry or chunk count")]
    InconsistentGeometry(u32),
}

#[derive(Debug)]
struct Partial {
    first_ms: u64,
    width: u16,
    height: u16,
    slots: Vec<Option<Vec<u8>>>,
    filled: usize,
}

/// Per-peer chunk reassembly with a 500 ms deadline per frame.
#[derive(Debug, Default)]
pub struct ReassemblyBuffer {
    partial: HashMap<u32, Partial>,
    // Recently delivered frames, so late duplicates do not restart them.
    delivered: HashMap<u32, u64>,
    dropped: u64,
}

impl ReassemblyBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of partial frames discarded on timeout so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn pending(&self) -> usize {
        self.partial.len()
    }

    fn expire(&mut self, now_ms: u64) {
        let before = self.partial.len();
        self.partial.retain(|_, p| now_ms.saturating_sub(p.first_ms) <= REASSEMBLY_TIMEOUT_MS);
        self.dropped += (before - self.partial.len()) as u64;
        self.delivered.retain(|_, t| now_ms.saturating_sub(*t) <= REASSEMBLY_TIMEOUT_MS);
    }

    /// Stores a chunk; returns `(frame_id, frame)` once every chunk is present.
    pub fn push(&mut self, chunk: &FrameChunk, now_ms: u64) -> Result<Option<(u32, BinFrame)>, ReassemblyError> {
        self.expire(now_ms);
        let id = chunk.frame_id;
        if self.delivered.contains_key(&id) {
            return Ok(None);
        }
        let bad = ReassemblyError::InconsistentGeometry(id);
        if chunk.chunk_cnt == 0 || chunk.chunk_idx >= chunk.chunk_cnt {
            return Err(bad);
        }
        let p = self.partial.entry(id).or_insert_with(|| Partial {
            first_ms: now_ms,
            width: chunk.width,
            height: chunk.height,
            slots: vec![None; chunk.chunk_cnt as usize],
            filled: 0,
        });
        if p.width != chunk.width || p.height != chunk.height || p.slots.len() != chunk.chunk_cnt as usize {
            return Err(bad);
        }
        let slot = &mut p.slots[chunk.chunk_idx as usize];
        if slot.is_none() {
            *slot = Some(chunk.data.clone());
            p.filled += 1;
        }
        if p.filled < p.slots.len() {
            return Ok(None);
        }
        let p = self.partial.remove(&id).expect("entry present");
        let packed: Vec<u8> = p.slots.into_iter().flatten().flatten().collect();
        let (w, h) = (p.width as usize, p.height as usize);
        if packed.len() != w.div_ceil(8) * h {
            return Err(bad);
        }
        let frame = BinFrame::unpack(w, h, &packed).map_err(|_| bad)?;
        self.delivered.insert(id, now_ms);
        Ok(Some((id, frame)))
    }
}

/// Sequenced packet sender over a UDP socket.
#[derive(Debug)]
pub struct PacketSender {
    socket: UdpSocket,
    target: SocketAddr,
    seq: u32,
}

impl PacketSender {
    pub fn new(socket: UdpSocket, target: SocketAddr) -> Self {
        Self { socket, target, seq: 0 }
    }

    pub fn send(&mut self, body: PacketBody) -> std::io::Result<()> {
        let pkt = Packet { seq: self.seq, body };
        self.seq = self.seq.wrapping_add(1);
        let bytes = encode_packet(&pkt).map_err(std::io::Error::other)?;
        self.socket.send_to(&bytes, self.target)?;
        Ok(())
    }

    pub fn send_frame(&mut self, bin: &BinFrame, frame_id: u32) -> std::io::Result<()> {
        for c in chunk_frame(bin, frame_id) {
            self.send(PacketBody::FrameChunk(c))?;
        }
        Ok(())
    }
}
