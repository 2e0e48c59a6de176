// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Datagram framing. Layout (big-endian):
//!
//! ```text
//! 0  magic u16 = 0x4D32     8  chassis u8       12 opcode u16
//! 2  version u8 = 0x01      9  slot u8          14 payload_len u16
//! 3  flags u8               10 reserved u16 = 0 16 payload
//! 4  seq u32                                    .. crc32 (IEEE) of all preceding bytes
//! ```

use thiserror::Error;

pub const MAGIC: u16 = 0x4D32;
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 16;
pub const CRC_LEN: usize = 4;
pub const MIN_FRAME: usize = HEADER_LEN + CRC_LEN;
/// One UDP datagram on a 1500-byte MTU without IP fragmentation.
pub const MAX_FRAME: usize = 1472;
pub const MAX_PAYLOAD: usize = MAX_FRAME - MIN_FRAME;

pub const FLAG_RESPONSE: u8 = 0x01;
pub const FLAG_NACK: u8 = 0x02;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic {0:#06x}")]
    BadMagic(u16),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("CRC mismatch")]
    CrcMismatch,
    #[error("frame truncated or length field inconsistent")]
    Truncated,
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub flags: u8,
    pub seq: u32,
    pub chassis: u8,
    pub slot: u8,
    pub opcode: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn request(seq: u32, chassis: u8, slot: u8, opcode: u16, payload: Vec<u8>) -> Self {
        Frame {
            flags: 0,
            seq,
            chassis,
            slot,
            opcode,
            payload,
        }
    }

    /// Response to `self` carrying `payload`.
    pub fn ack(&self, payload: Vec<u8>) -> Frame {
        Frame {
            flags: FLAG_RESPONSE,
            payload,
            ..self.clone()
        }
    }

    /// Negative response: status code followed by a UTF-8 message.
    pub fn nack(&self, status: u16, message: &str) -> Frame {
        let mut payload = status.to_be_bytes().to_vec();
        let room = MAX_PAYLOAD - 2;
        let msg = message.as_bytes();
        let mut end = msg.len().min(room);
        while !message.is_char_boundary(end) {
            end -= 1;
        }
        payload.extend_from_slice(&msg[..end]);
        Frame {
            flags: FLAG_RESPONSE | FLAG_NACK,
            payload,
            ..self.clone()
        }
    }

    pub fn is_response(&self) -> bool {
        self.flags & FLAG_RESPONSE != 0
    }

    pub fn is_nack(&self) -> bool {
        self.flags & FLAG_NACK != 0
    }

    /// Status code and message of a NACK.
    pub fn nack_status(&self) -> Option<(u16, String)> {
        if !self.is_nack() || self.payload.len() < 2 {
            return None;
        }
        let code = u16::from_be_bytes([self.payload[0], self.payload[1]]);
        Some((code, String::from_utf8_lossy(&self.payload[2..]).into_owned()))
    }

    pub fn encoded_len(&self) -> usize {
        MIN_FRAME + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(FrameError::PayloadTooLarge(self.payload.len()));
        }
        let mut b = Vec::with_capacity(self.encoded_len());
        b.extend_from_slice(&MAGIC.to_be_bytes());
        b.push(VERSION);
        b.push(self.flags);
        b.extend_from_slice(&self.seq.to_be_bytes());
        b.push(self.chassis);
        b.push(self.slot);
        b.extend_from_slice(&[0, 0]);
        b.extend_from_slice(&self.opcode.to_be_bytes());
        b.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        b.extend_from_slice(&self.payload);
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_be_bytes());
        Ok(b)
    }

    /// Checks, in order: minimum length, CRC, magic, version, length field.
    pub fn decode(b: &[u8]) -> Result<Frame, FrameError> {
        if b.len() < MIN_FRAME {
            return Err(FrameError::Truncated);
        }
        let (body, crc) = b.split_at(b.len() - CRC_LEN);
        if crc32fast::hash(body) != u32::from_be_bytes(crc.try_into().expect("4 bytes")) {
            return Err(FrameError::CrcMismatch);
        }
        let magic = u16::from_be_bytes([b[0], b[1]]);
        if magic != MAGIC {
            return Err(FrameError::BadMagic(magic));
        }
        if b[2] != VERSION {
            return Err(FrameError::BadVersion(b[2]));
        }
        let len = u16::from_be_bytes([b[14], b[15]]) as usize;
        if body.len() != HEADER_LEN + len {
            return Err(FrameError::Truncated);
        }
        Ok(Frame {
            flags: b[3],
            seq: u32::from_be_bytes(b[4..8].try_into().expect("4 bytes")),
            chassis: b[8],
            slot: b[9],
            opcode: u16::from_be_bytes([b[12], b[13]]),
            payload: body[HEADER_LEN..].to_vec(),
        })
    }

    /// Best-effort header of a frame that failed [`Frame::decode`], used to
    /// address a NACK.
    pub fn salvage_header(b: &[u8]) -> Option<Frame> {
        (b.len() >= HEADER_LEN).then(|| Frame {
            flags: b[3],
            seq: u32::from_be_bytes(b[4..8].try_into().expect("4 bytes")),
            chassis: b[8],
            slot: b[9],
            opcode: u16::from_be_bytes([b[12], b[13]]),
            payload: Vec::new(),
        })
    }
}
