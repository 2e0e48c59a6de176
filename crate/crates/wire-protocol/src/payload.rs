// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Opcodes, NACK status codes and the payload layout of every command.

use thiserror::Error;

use m2cs_awg::{EntryFlags, PlaylistEntry};
use m2cs_daq::{DemodChannelConfig, IQResult, Threshold};
use m2cs_mixer::MixerCorrection;
use m2cs_signal::WindowKind;

use super::frame::MAX_PAYLOAD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Opcode {
    Ping = 0x0001,
    Identify = 0x0002,
    WriteWave = 0x0010,
    WritePlaylist = 0x0011,
    WriteTrigTable = 0x0012,
    SetDemod = 0x0020,
    SetThreshold = 0x0021,
    Start = 0x0030,
    Stop = 0x0031,
    ReadDemod = 0x0040,
    ReadRaw = 0x0041,
    SetMixerCorrection = 0x0050,
    ReadStatus = 0x0060,
}

impl Opcode {
    pub const ALL: [Opcode; 13] = [
        Opcode::Ping,
        Opcode::Identify,
        Opcode::WriteWave,
        Opcode::WritePlaylist,
        Opcode::WriteTrigTable,
        Opcode::SetDemod,
        Opcode::SetThreshold,
        Opcode::Start,
        Opcode::Stop,
        Opcode::ReadDemod,
        Opcode::ReadRaw,
        Opcode::SetMixerCorrection,
        Opcode::ReadStatus,
    ];

    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn from_code(code: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.code() == code)
    }

    /// Commands that only read state; they are never cached for dedup.
    pub fn is_read_only(self) -> bool {
        matches!(
            self,
            Opcode::Ping | Opcode::Identify | Opcode::ReadDemod | Opcode::ReadRaw | Opcode::ReadStatus
        )
    }
}

/// NACK status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Status {
    UnknownOpcode = 0x0001,
    BadPayload = 0x0002,
    UnknownSlot = 0x0003,
    WrongModule = 0x0004,
    OutOfOrderChunk = 0x0005,
    CapacityExceeded = 0x0006,
    RunActive = 0x0007,
    InvalidConfig = 0x0008,
    CrcMismatch = 0x0009,
    UnknownChassis = 0x000A,
    StorageFull = 0x000B,
}

impl Status {
    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn from_code(code: u16) -> Option<Self> {
        use Status::*;
        [
            UnknownOpcode,
            BadPayload,
            UnknownSlot,
            WrongModule,
            OutOfOrderChunk,
            CapacityExceeded,
            RunActive,
            InvalidConfig,
            CrcMismatch,
            UnknownChassis,
            StorageFull,
        ]
        .into_iter()
        .find(|s| s.code() == code)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayloadError {
    #[error("payload too short")]
    Short,
    #[error("{0} unexpected trailing bytes")]
    Trailing(usize),
    #[error("invalid field: {0}")]
    Invalid(String),
    #[error("payload would exceed {MAX_PAYLOAD} bytes")]
    TooLarge,
}

struct Rd<'a> {
    b: &'a [u8],
    pos: usize,
}

macro_rules! rd_int {
    ($name:ident, $t:ty) => {
        fn $name(&mut self) -> Result<$t, PayloadError> {
            const N: usize = std::mem::size_of::<$t>();
            let s = self.b.get(self.pos..self.pos + N).ok_or(PayloadError::Short)?;
            self.pos += N;
            Ok(<$t>::from_be_bytes(s.try_into().expect("sized")))
        }
    };
}

impl<'a> Rd<'a> {
    fn new(b: &'a [u8]) -> Self {
        Rd { b, pos: 0 }
    }

    rd_int!(u8, u8);
    rd_int!(i8, i8);
    rd_int!(u16, u16);
    rd_int!(i16, i16);
    rd_int!(u32, u32);
    rd_int!(i32, i32);
    rd_int!(u64, u64);
    rd_int!(i64, i64);

    fn f64(&mut self) -> Result<f64, PayloadError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn rest(&mut self) -> &'a [u8] {
        let r = &self.b[self.pos..];
        self.pos = self.b.len();
        r
    }

    fn finish(self) -> Result<(), PayloadError> {
        match self.b.len() - self.pos {
            0 => Ok(()),
            n => Err(PayloadError::Trailing(n)),
        }
    }
}

fn check_len(v: Vec<u8>) -> Result<Vec<u8>, PayloadError> {
    if v.len() > MAX_PAYLOAD {
        Err(PayloadError::TooLarge)
    } else {
        Ok(v)
    }
}

/// Module type codes reported by IDENTIFY.
pub const MODULE_NONE: u8 = 0;
pub const MODULE_AWG_IF: u8 = 1;
pub const MODULE_AWG_RF: u8 = 2;
pub const MODULE_DAQ: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifyInfo {
    pub chassis: u8,
    /// Module type per slot 1..=14.
    pub modules: [u8; 14],
    pub emulator_version: String,
}

impl IdentifyInfo {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = vec![self.chassis];
        v.extend_from_slice(&self.modules);
        v.extend_from_slice(self.emulator_version.as_bytes());
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let chassis = r.u8()?;
        let mut modules = [0u8; 14];
        for m in &mut modules {
            *m = r.u8()?;
        }
        let emulator_version =
            String::from_utf8(r.rest().to_vec()).map_err(|e| PayloadError::Invalid(e.to_string()))?;
        Ok(IdentifyInfo {
            chassis,
            modules,
            emulator_version,
        })
    }
}

/// Samples per WRITE_WAVE chunk.
pub const WAVE_CHUNK: usize = 700;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteWave {
    pub channel: u8,
    pub segment_id: u16,
    pub offset: u32,
    pub total_len: u32,
    pub samples: Vec<i16>,
}

impl WriteWave {
    pub fn encode(&self) -> Result<Vec<u8>, PayloadError> {
        if self.samples.len() > WAVE_CHUNK {
            return Err(PayloadError::TooLarge);
        }
        let mut v = vec![self.channel, 0];
        v.extend_from_slice(&self.segment_id.to_be_bytes());
        v.extend_from_slice(&self.offset.to_be_bytes());
        v.extend_from_slice(&self.total_len.to_be_bytes());
        v.extend_from_slice(&(self.samples.len() as u16).to_be_bytes());
        for s in &self.samples {
            v.extend_from_slice(&s.to_be_bytes());
        }
        check_len(v)
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let channel = r.u8()?;
        r.u8()?;
        let segment_id = r.u16()?;
        let offset = r.u32()?;
        let total_len = r.u32()?;
        let n = r.u16()? as usize;
        if n > WAVE_CHUNK {
            return Err(PayloadError::Invalid(format!("{n} samples in one chunk")));
        }
        let samples = (0..n).map(|_| r.i16()).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(WriteWave {
            channel,
            segment_id,
            offset,
            total_len,
            samples,
        })
    }

    /// Splits a segment into in-order chunks.
    pub fn chunks(channel: u8, segment_id: u16, samples: &[i16]) -> Vec<WriteWave> {
        let total_len = samples.len() as u32;
        if samples.is_empty() {
            return vec![WriteWave {
                channel,
                segment_id,
                offset: 0,
                total_len,
                samples: Vec::new(),
            }];
        }
        samples
            .chunks(WAVE_CHUNK)
            .enumerate()
            .map(|(k, c)| WriteWave {
                channel,
                segment_id,
                offset: (k * WAVE_CHUNK) as u32,
                total_len,
                samples: c.to_vec(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveAck {
    /// Samples assembled so far; equals the segment length once complete.
    pub received: u32,
    pub complete: bool,
}

impl WaveAck {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = self.received.to_be_bytes().to_vec();
        v.push(self.complete as u8);
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let received = r.u32()?;
        let complete = r.u8()? != 0;
        r.finish()?;
        Ok(WaveAck { received, complete })
    }
}

pub const PLAYLIST_ENTRY_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WritePlaylist {
    pub entries: Vec<PlaylistEntry>,
}

impl WritePlaylist {
    pub fn encode(&self) -> Result<Vec<u8>, PayloadError> {
        let mut v = (self.entries.len() as u16).to_be_bytes().to_vec();
        for e in &self.entries {
            for x in [
                e.segment_id,
                e.repeat,
                e.next_default,
                e.next_branch0,
                e.next_branch1,
                e.flags.bits(),
            ] {
                v.extend_from_slice(&x.to_be_bytes());
            }
        }
        check_len(v)
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let n = r.u16()?;
        let mut entries = Vec::with_capacity(n as usize);
        for _ in 0..n {
            entries.push(PlaylistEntry {
                segment_id: r.u16()?,
                repeat: r.u16()?,
                next_default: r.u16()?,
                next_branch0: r.u16()?,
                next_branch1: r.u16()?,
                flags: EntryFlags::from_bits(r.u16()?),
            });
        }
        r.finish()?;
        Ok(WritePlaylist { entries })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteTrigTable {
    pub target_slot: u8,
    /// Extend the slot's table instead of replacing it.
    pub append: bool,
    /// DAQ slot and demodulation channel consulted by FEEDBACK instructions.
    pub feedback: Option<(u8, u8)>,
    /// Raw 36-bit instructions.
    pub instructions: Vec<u64>,
}

impl WriteTrigTable {
    pub fn encode(&self) -> Result<Vec<u8>, PayloadError> {
        let flags = self.append as u8 | (self.feedback.is_some() as u8) << 1;
        let (fs, fc) = self.feedback.unwrap_or((0, 0));
        let mut v = vec![self.target_slot, flags, fs, fc];
        v.extend_from_slice(&(self.instructions.len() as u16).to_be_bytes());
        for i in &self.instructions {
            v.extend_from_slice(&i.to_be_bytes());
        }
        check_len(v)
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let target_slot = r.u8()?;
        let flags = r.u8()?;
        let (fs, fc) = (r.u8()?, r.u8()?);
        let n = r.u16()?;
        let instructions = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(WriteTrigTable {
            target_slot,
            append: flags & 1 != 0,
            feedback: (flags & 2 != 0).then_some((fs, fc)),
            instructions,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetDemod {
    /// `None` disables the channel named by `channel`.
    pub config: Option<DemodChannelConfig>,
    pub channel: u8,
}

impl SetDemod {
    pub fn enable(cfg: DemodChannelConfig) -> Self {
        SetDemod {
            config: Some(cfg),
            channel: cfg.channel,
        }
    }

    pub fn disable(channel: u8) -> Self {
        SetDemod { config: None, channel }
    }

    pub fn encode(&self) -> Vec<u8> {
        let c = self.config.unwrap_or(DemodChannelConfig {
            channel: self.channel,
            freq_hz: 0.0,
            phase_millideg: 0,
            window: WindowKind::Rect,
            length_ns: 0,
            input: 0,
        });
        let mut v = vec![self.channel, self.config.is_some() as u8, c.input, c.window.code()];
        v.extend_from_slice(&c.freq_hz.to_bits().to_be_bytes());
        v.extend_from_slice(&c.phase_millideg.to_be_bytes());
        v.extend_from_slice(&c.length_ns.to_be_bytes());
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let channel = r.u8()?;
        let enable = r.u8()? != 0;
        let input = r.u8()?;
        let wcode = r.u8()?;
        let window =
            WindowKind::from_code(wcode).ok_or_else(|| PayloadError::Invalid(format!("window code {wcode}")))?;
        let freq_hz = r.f64()?;
        let phase_millideg = r.i32()?;
        let length_ns = r.u32()?;
        r.finish()?;
        let cfg = DemodChannelConfig {
            channel,
            freq_hz,
            phase_millideg,
            window,
            length_ns,
            input,
        };
        Ok(SetDemod {
            config: enable.then_some(cfg),
            channel,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetThreshold {
    pub channel: u8,
    pub threshold: Threshold,
}

impl SetThreshold {
    pub fn encode(&self) -> Vec<u8> {
        let t = self.threshold;
        let mut v = vec![self.channel, 0];
        v.extend_from_slice(&t.wx.to_be_bytes());
        v.extend_from_slice(&t.wy.to_be_bytes());
        v.extend_from_slice(&t.b.to_be_bytes());
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let channel = r.u8()?;
        r.u8()?;
        let threshold = Threshold {
            wx: r.i16()?,
            wy: r.i16()?,
            b: r.i64()?,
        };
        r.finish()?;
        Ok(SetThreshold { channel, threshold })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Start {
    pub shots: u32,
    /// Level-1 trigger repetition period.
    pub period_ns: u32,
}

impl Start {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = self.shots.to_be_bytes().to_vec();
        v.extend_from_slice(&self.period_ns.to_be_bytes());
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let s = Start {
            shots: r.u32()?,
            period_ns: r.u32()?,
        };
        r.finish()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadDemod {
    /// Index into the (shot, channel)-ordered result list.
    pub after: u32,
    pub max: u16,
}

pub const DEMOD_RECORD_LEN: usize = 24;
pub const DEMOD_PAGE_MAX: usize = (MAX_PAYLOAD - 2) / DEMOD_RECORD_LEN;

impl ReadDemod {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = self.after.to_be_bytes().to_vec();
        v.extend_from_slice(&self.max.to_be_bytes());
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let s = ReadDemod {
            after: r.u32()?,
            max: r.u16()?,
        };
        r.finish()?;
        Ok(s)
    }
}

/// Record: channel u8, shot u32, state u8, I i64, Q i64, two pad bytes.
pub fn encode_demod_page(results: &[IQResult]) -> Result<Vec<u8>, PayloadError> {
    let mut v = (results.len() as u16).to_be_bytes().to_vec();
    for r in results {
        v.push(r.channel);
        v.extend_from_slice(&r.shot_index.to_be_bytes());
        v.push(r.state_bit);
        v.extend_from_slice(&r.i_acc.to_be_bytes());
        v.extend_from_slice(&r.q_acc.to_be_bytes());
        v.extend_from_slice(&[0, 0]);
    }
    check_len(v)
}

pub fn decode_demod_page(b: &[u8]) -> Result<Vec<IQResult>, PayloadError> {
    let mut r = Rd::new(b);
    let n = r.u16()?;
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let channel = r.u8()?;
        let shot_index = r.u32()?;
        let state_bit = r.u8()?;
        let i_acc = r.i64()?;
        let q_acc = r.i64()?;
        r.u16()?;
        out.push(IQResult {
            channel,
            shot_index,
            i_acc,
            q_acc,
            state_bit,
        });
    }
    r.finish()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadRaw {
    pub input: u8,
    pub offset: u32,
    pub max: u16,
}

pub const RAW_PAGE_MAX: usize = 700;

impl ReadRaw {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = vec![self.input];
        v.extend_from_slice(&self.offset.to_be_bytes());
        v.extend_from_slice(&self.max.to_be_bytes());
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let s = ReadRaw {
            input: r.u8()?,
            offset: r.u32()?,
            max: r.u16()?,
        };
        r.finish()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPage {
    /// Pairs stored for this input.
    pub total: u32,
    pub samples: Vec<(i8, i8)>,
}

impl RawPage {
    pub fn encode(&self) -> Result<Vec<u8>, PayloadError> {
        let mut v = self.total.to_be_bytes().to_vec();
        v.extend_from_slice(&(self.samples.len() as u16).to_be_bytes());
        for (i, q) in &self.samples {
            v.push(*i as u8);
            v.push(*q as u8);
        }
        check_len(v)
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let total = r.u32()?;
        let n = r.u16()?;
        let samples = (0..n)
            .map(|_| Ok((r.i8()?, r.i8()?)))
            .collect::<Result<_, PayloadError>>()?;
        r.finish()?;
        Ok(RawPage { total, samples })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetMixerCorrection {
    pub pair: u8,
    pub correction: MixerCorrection,
}

impl SetMixerCorrection {
    pub fn encode(&self) -> Vec<u8> {
        let c = &self.correction;
        let mut v = vec![self.pair];
        for x in [c.offset_i, c.offset_q, c.m11, c.m12, c.m21, c.m22] {
            v.extend_from_slice(&x.to_bits().to_be_bytes());
        }
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let pair = r.u8()?;
        let correction = MixerCorrection {
            offset_i: r.f64()?,
            offset_q: r.f64()?,
            m11: r.f64()?,
            m12: r.f64()?,
            m21: r.f64()?,
            m22: r.f64()?,
        };
        r.finish()?;
        Ok(SetMixerCorrection { pair, correction })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatusReport {
    pub run_active: bool,
    pub now_ps: u64,
    pub shots_done: u32,
    pub shots_total: u32,
    /// Stored demodulation results (the addressed DAQ, or all DAQs).
    pub results: u32,
    pub feedback_errors: u32,
    /// SHA-256 of the module configuration and stored data.
    pub digest: [u8; 32],
}

impl StatusReport {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = vec![self.run_active as u8, 0];
        v.extend_from_slice(&self.now_ps.to_be_bytes());
        for x in [self.shots_done, self.shots_total, self.results, self.feedback_errors] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(&self.digest);
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Rd::new(b);
        let run_active = r.u8()? != 0;
        r.u8()?;
        let now_ps = r.u64()?;
        let shots_done = r.u32()?;
        let shots_total = r.u32()?;
        let results = r.u32()?;
        let feedback_errors = r.u32()?;
        let mut digest = [0u8; 32];
        for d in &mut digest {
            *d = r.u8()?;
        }
        r.finish()?;
        Ok(StatusReport {
            run_active,
            now_ps,
            shots_done,
            shots_total,
            results,
            feedback_errors,
            digest,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn opcode_codes_are_fixed() {
        let codes: Vec<u16> = Opcode::ALL.iter().map(|o| o.code()).collect();
        assert_eq!(
            codes,
            [0x1, 0x2, 0x10, 0x11, 0x12, 0x20, 0x21, 0x30, 0x31, 0x40, 0x41, 0x50, 0x60]
        );
        assert_eq!(Opcode::from_code(0x0060), Some(Opcode::ReadStatus));
        assert_eq!(Opcode::from_code(0x0003), None);
        assert_eq!(Status::from_code(1), Some(Status::UnknownOpcode));
    }

    #[test]
    fn wave_chunking() {
        let samples = vec![1i16; 400_000];
        let chunks = WriteWave::chunks(0, 3, &samples);
        assert_eq!(chunks.len(), 572);
        assert_eq!(chunks.last().unwrap().samples.len(), 400_000 - 571 * 700);
        assert!(chunks.iter().all(|c| c.encode().unwrap().len() <= MAX_PAYLOAD));
        let c = &chunks[5];
        assert_eq!(&WriteWave::decode(&c.encode().unwrap()).unwrap(), c);
        let too_big = WriteWave {
            samples: vec![0; 701],
            ..c.clone()
        };
        assert_eq!(too_big.encode(), Err(PayloadError::TooLarge));
    }

    #[test]
    fn demod_page_fits_sixty_records() {
        assert_eq!(DEMOD_PAGE_MAX, 60);
        let r = IQResult {
            channel: 11,
            shot_index: 59_999,
            i_acc: -(1 << 40),
            q_acc: 12345,
            state_bit: 1,
        };
        let page = vec![r; 60];
        let b = encode_demod_page(&page).unwrap();
        assert_eq!(b.len(), 2 + 60 * 24);
        assert_eq!(decode_demod_page(&b).unwrap(), page);
        assert_eq!(encode_demod_page(&vec![r; 61]), Err(PayloadError::TooLarge));
    }

    #[test]
    fn trailing_and_short_payloads_rejected() {
        let s = Start {
            shots: 3,
            period_ns: 1000,
        }
        .encode();
        assert_eq!(Start::decode(&s[..7]), Err(PayloadError::Short));
        let mut long = s.clone();
        long.push(0);
        assert_eq!(Start::decode(&long), Err(PayloadError::Trailing(1)));
    }

    #[test]
    fn small_messages_round_trip() {
        let id = IdentifyInfo {
            chassis: 2,
            modules: [3, 2, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
            emulator_version: "0.1.0".into(),
        };
        assert_eq!(IdentifyInfo::decode(&id.encode()).unwrap(), id);
        let t = WriteTrigTable {
            target_slot: 2,
            append: true,
            feedback: Some((4, 0)),
            instructions: vec![0x0_0000_0011, 0xF_FFFF_FFF8],
        };
        assert_eq!(WriteTrigTable::decode(&t.encode().unwrap()).unwrap(), t);
        let d = SetDemod::enable(DemodChannelConfig {
            channel: 7,
            freq_hz: -123.25e6,
            phase_millideg: -90_000,
            window: WindowKind::Hann,
            length_ns: 8000,
            input: 1,
        });
        assert_eq!(SetDemod::decode(&d.encode()).unwrap(), d);
        assert_eq!(
            SetDemod::decode(&SetDemod::disable(4).encode()).unwrap(),
            SetDemod::disable(4)
        );
        let th = SetThreshold {
            channel: 1,
            threshold: Threshold {
                wx: -3,
                wy: 32767,
                b: -99,
            },
        };
        assert_eq!(SetThreshold::decode(&th.encode()).unwrap(), th);
        let m = SetMixerCorrection {
            pair: 1,
            correction: MixerCorrection {
                offset_i: 1e-3,
                offset_q: -2e-3,
                m11: 1.0,
                m12: -0.03,
                m21: 0.0,
                m22: 0.96,
            },
        };
        assert_eq!(SetMixerCorrection::decode(&m.encode()).unwrap(), m);
        let raw = RawPage {
            total: 10,
            samples: vec![(-128, 127), (0, -1)],
        };
        assert_eq!(RawPage::decode(&raw.encode().unwrap()).unwrap(), raw);
        let st = StatusReport {
            run_active: true,
            now_ps: 1 << 50,
            shots_done: 3,
            shots_total: 9,
            results: 27,
            feedback_errors: 1,
            digest: [7; 32],
        };
        assert_eq!(StatusReport::decode(&st.encode()).unwrap(), st);
        let wa = WaveAck {
            received: 400_000,
            complete: true,
        };
        assert_eq!(WaveAck::decode(&wa.encode()).unwrap(), wa);
        let rr = ReadRaw {
            input: 1,
            offset: 5,
            max: 700,
        };
        assert_eq!(ReadRaw::decode(&rr.encode()).unwrap(), rr);
        let rd = ReadDemod { after: 16, max: 16 };
        assert_eq!(ReadDemod::decode(&rd.encode()).unwrap(), rd);
    }

    proptest! {
        #[test]
        fn playlist_round_trip(raw in proptest::collection::vec((any::<u16>(), 1u16..100, any::<u16>(), any::<u16>(), any::<u16>(), 0u16..4), 0..120)) {
            let entries: Vec<PlaylistEntry> = raw.into_iter().map(|(s, r, n, b0, b1, f)| PlaylistEntry {
                segment_id: s, repeat: r, next_default: n, next_branch0: b0, next_branch1: b1, flags: EntryFlags::from_bits(f),
            }).collect();
            let p = WritePlaylist { entries };
            prop_assert_eq!(WritePlaylist::decode(&p.encode().unwrap()).unwrap(), p);
        }
    }
}
