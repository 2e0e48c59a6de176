// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! AWG module: wave RAM, branching playlist and the trigger-driven FSM.
//!
//! Playback is recorded as [`Span`]s (entry, start, end) rather than sample
//! streams; [`Awg::render`] turns spans back into voltages for any window.

use std::collections::BTreeMap;

use thiserror::Error;

use m2cs_mixer::{self as mixer, MixerCorrection, MixerError, MixerImpairments};
use m2cs_signal::{self as signal, DacCode, DAC_LSB_V};
use m2cs_timebase::{BlockId, Event, EventKind, SimTime};

pub const CHANNELS: usize = 4;
pub const CHANNEL_CAPACITY: usize = 400_000;
/// Playlist index that stops playback.
pub const HALT: u16 = 0xFFFF;
pub const SAMPLE_RATE_HZ: f64 = 2e9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveSegment {
    pub segment_id: u16,
    pub samples: Vec<DacCode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EntryFlags {
    pub wait_for_trigger: bool,
    pub end: bool,
}

impl EntryFlags {
    pub const WAIT: EntryFlags = EntryFlags {
        wait_for_trigger: true,
        end: false,
    };
    pub const END: EntryFlags = EntryFlags {
        wait_for_trigger: false,
        end: true,
    };

    pub fn bits(self) -> u16 {
        self.wait_for_trigger as u16 | (self.end as u16) << 1
    }

    pub fn from_bits(bits: u16) -> Self {
        EntryFlags {
            wait_for_trigger: bits & 1 != 0,
            end: bits & 2 != 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlaylistEntry {
    pub segment_id: u16,
    pub repeat: u16,
    pub next_default: u16,
    pub next_branch0: u16,
    pub next_branch1: u16,
    pub flags: EntryFlags,
}

impl PlaylistEntry {
    /// Plays `segment_id` once and moves to `next`.
    pub fn play(segment_id: u16, next: u16) -> Self {
        PlaylistEntry {
            segment_id,
            repeat: 1,
            next_default: next,
            next_branch0: HALT,
            next_branch1: HALT,
            flags: EntryFlags::default(),
        }
    }

    /// Branch point: waits for a branch trigger, plays nothing.
    pub fn wait(branch0: u16, branch1: u16) -> Self {
        PlaylistEntry {
            segment_id: 0,
            repeat: 1,
            next_default: HALT,
            next_branch0: branch0,
            next_branch1: branch1,
            flags: EntryFlags::WAIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Playlist {
    entries: Vec<PlaylistEntry>,
}

impl Playlist {
    pub fn new(entries: Vec<PlaylistEntry>) -> Result<Self, AwgError> {
        if entries.is_empty() {
            return Err(AwgError::BadPlaylist("empty playlist".into()));
        }
        let n = entries.len();
        for (k, e) in entries.iter().enumerate() {
            if e.repeat == 0 {
                return Err(AwgError::BadPlaylist(format!("entry {k} has repeat 0")));
            }
            for idx in [e.next_default, e.next_branch0, e.next_branch1] {
                if idx != HALT && idx as usize >= n {
                    return Err(AwgError::BadPlaylist(format!("entry {k} links to missing entry {idx}")));
                }
            }
        }
        Ok(Playlist { entries })
    }

    pub fn entries(&self) -> &[PlaylistEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AwgLatency {
    pub fsm_ns: u32,
    pub total_ns: u32,
}

impl Default for AwgLatency {
    fn default() -> Self {
        AwgLatency {
            fsm_ns: 32,
            total_ns: 72,
        }
    }
}

impl AwgLatency {
    /// Interface and DAC pipeline share of the budget.
    pub fn pipeline_ns(&self) -> u32 {
        self.total_ns - self.fsm_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriggerKind {
    Start,
    Stop,
    Branch0,
    Branch1,
}

impl TriggerKind {
    pub fn code(self) -> u8 {
        match self {
            TriggerKind::Start => 0x1,
            TriggerKind::Stop => 0x2,
            TriggerKind::Branch0 => 0x4,
            TriggerKind::Branch1 => 0x5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x1 => Some(TriggerKind::Start),
            0x2 => Some(TriggerKind::Stop),
            0x4 => Some(TriggerKind::Branch0),
            0x5 => Some(TriggerKind::Branch1),
            _ => None,
        }
    }
}

/// RF personality: channels (0,1) and (2,3) each drive an IQ mixer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfStage {
    pub lo_hz: f64,
    pub impairments: [MixerImpairments; 2],
    pub correction: [MixerCorrection; 2],
}

impl RfStage {
    pub fn ideal(lo_hz: f64) -> Self {
        RfStage {
            lo_hz,
            impairments: [MixerImpairments::ideal(lo_hz); 2],
            correction: [MixerCorrection::IDENTITY; 2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Personality {
    If,
    Rf(RfStage),
}

/// Measured offset at code 0.
pub const DC_OFFSET_V: f64 = -0.85e-3;
/// Measured output at code 1638.
pub const DC_REF_V: f64 = 200.03e-3;
pub const DC_REF_CODE: i16 = 1638;

/// Static output-stage error, white noise and linear drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcModel {
    pub offset_enabled: bool,
    pub offset_v: f64,
    pub gain: f64,
    /// Code driven while no segment plays.
    pub level_code: i16,
    /// White noise density, V/√Hz.
    pub noise_density: f64,
    pub drift_v_per_s: f64,
    pub seed: u64,
}

impl Default for DcModel {
    fn default() -> Self {
        DcModel {
            offset_enabled: false,
            offset_v: DC_OFFSET_V,
            gain: (DC_REF_V - DC_OFFSET_V) / (DC_REF_CODE as f64 * DAC_LSB_V),
            level_code: 0,
            noise_density: 20e-9,
            drift_v_per_s: 0.0,
            seed: 0,
        }
    }
}

impl DcModel {
    pub fn quiet() -> Self {
        DcModel {
            noise_density: 0.0,
            ..Self::default()
        }
    }

    pub fn volts(&self, code: i16) -> f64 {
        let ideal = code as f64 * DAC_LSB_V;
        if self.offset_enabled {
            self.gain * ideal + self.offset_v
        } else {
            ideal
        }
    }

    /// Per-sample rms of the white noise over the 1 GHz Nyquist band.
    pub fn noise_rms(&self) -> f64 {
        self.noise_density * (SAMPLE_RATE_HZ / 2.0).sqrt()
    }
}

/// One playlist entry as it was (or is being) played.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: SimTime,
    pub end: SimTime,
    pub entry: u16,
    pub segment_id: u16,
    /// Samples per repetition.
    pub seg_len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsmState {
    Idle,
    /// A start or branch is in the 72 ns pipeline.
    Starting,
    Playing {
        entry: u16,
    },
    Waiting {
        entry: u16,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum AwgError {
    #[error("channel {0} does not exist")]
    BadChannel(u8),
    #[error("channel {channel} capacity exceeded: {requested} samples requested, {available} free")]
    CapacityExceeded {
        channel: u8,
        requested: usize,
        available: usize,
    },
    #[error("no playlist loaded")]
    NoPlaylist,
    #[error("invalid playlist: {0}")]
    BadPlaylist(String),
    #[error("module has no RF stage")]
    NotRf,
    #[error("unknown trigger code {0:#x}")]
    UnknownTrigger(u8),
    #[error(transparent)]
    Mixer(#[from] MixerError),
}

const TAG_START: u8 = 1;
const TAG_END: u8 = 2;

#[derive(Debug, Clone)]
pub struct Awg {
    block: BlockId,
    personality: Personality,
    latency: AwgLatency,
    dc: DcModel,
    channels: [BTreeMap<u16, Vec<DacCode>>; CHANNELS],
    playlist: Option<Playlist>,
    state: FsmState,
    latched: Option<u8>,
    generation: u32,
    spans: Vec<Span>,
}

impl Awg {
    pub fn new(block: BlockId, personality: Personality) -> Self {
        Awg {
            block,
            personality,
            latency: AwgLatency::default(),
            dc: DcModel::default(),
            channels: Default::default(),
            playlist: None,
            state: FsmState::Idle,
            latched: None,
            generation: 0,
            spans: Vec::new(),
        }
    }

    pub fn block(&self) -> BlockId {
        self.block
    }

    pub fn personality(&self) -> &Personality {
        &self.personality
    }

    pub fn set_personality(&mut self, p: Personality) {
        self.personality = p;
    }

    pub fn set_correction(&mut self, pair: usize, corr: MixerCorrection) -> Result<(), AwgError> {
        match &mut self.personality {
            Personality::Rf(stage) if pair < 2 => {
                stage.correction[pair] = corr;
                Ok(())
            }
            Personality::Rf(_) => Err(AwgError::BadChannel(pair as u8)),
            Personality::If => Err(AwgError::NotRf),
        }
    }

    pub fn latency(&self) -> AwgLatency {
        self.latency
    }

    pub fn dc_model(&self) -> &DcModel {
        &self.dc
    }

    pub fn set_dc_model(&mut self, dc: DcModel) {
        self.dc = dc;
    }

    pub fn state(&self) -> FsmState {
        self.state
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn playlist(&self) -> Option<&Playlist> {
        self.playlist.as_ref()
    }

    /// Drops recorded playback history (called at each level-1 trigger).
    pub fn clear_history(&mut self) {
        let now_open: Vec<Span> = match self.state {
            FsmState::Playing { .. } => self.spans.last().copied().into_iter().collect(),
            _ => Vec::new(),
        };
        self.spans = now_open;
    }

    pub fn stored_samples(&self, channel: usize) -> usize {
        self.channels.get(channel).map_or(0, |m| m.values().map(Vec::len).sum())
    }

    pub fn segment(&self, channel: usize, segment_id: u16) -> Option<&[DacCode]> {
        self.channels.get(channel)?.get(&segment_id).map(Vec::as_slice)
    }

    pub fn segment_ids(&self, channel: usize) -> Vec<u16> {
        self.channels
            .get(channel)
            .map_or_else(Vec::new, |m| m.keys().copied().collect())
    }

    pub fn load_segment(&mut self, channel: u8, seg: WaveSegment) -> Result<(), AwgError> {
        let ch = self
            .channels
            .get_mut(channel as usize)
            .ok_or(AwgError::BadChannel(channel))?;
        let used: usize = ch
            .iter()
            .filter(|(id, _)| **id != seg.segment_id)
            .map(|(_, s)| s.len())
            .sum();
        let available = CHANNEL_CAPACITY - used;
        if seg.samples.len() > available {
            return Err(AwgError::CapacityExceeded {
                channel,
                requested: seg.samples.len(),
                available,
            });
        }
        ch.insert(seg.segment_id, seg.samples);
        Ok(())
    }

    pub fn clear_segments(&mut self) {
        self.channels.iter_mut().for_each(BTreeMap::clear);
    }

    pub fn set_playlist(&mut self, playlist: Playlist) {
        self.playlist = Some(playlist);
    }

    fn segment_len(&self, segment_id: u16) -> u32 {
        self.channels
            .iter()
            .filter_map(|c| c.get(&segment_id))
            .map(|s| s.len() as u32)
            .max()
            .unwrap_or(0)
    }

    fn wave_event(&self, at: SimTime, tag: u8, entry: u16) -> Event {
        let kind = if tag == TAG_START {
            EventKind::WaveStart
        } else {
            EventKind::WaveEnd
        };
        let mut p = vec![tag];
        p.extend_from_slice(&self.generation.to_be_bytes());
        p.extend_from_slice(&entry.to_be_bytes());
        Event::new(at, self.block, kind).with_payload(p)
    }

    fn close_open_span(&mut self, at: SimTime) {
        if let Some(last) = self.spans.last_mut() {
            if last.end > at {
                last.end = at.max(last.start);
            }
        }
    }

    pub fn on_trigger(&mut self, kind: TriggerKind, at: SimTime) -> Result<Vec<Event>, AwgError> {
        if self.playlist.is_none() {
            return Err(AwgError::NoPlaylist);
        }
        let out_at = (at + SimTime::from_ns(self.latency.total_ns as u64)).ceil_to(SimTime::DAC_PERIOD);
        match kind {
            TriggerKind::Start => {
                self.generation = self.generation.wrapping_add(1);
                self.latched = None;
                self.state = FsmState::Starting;
                Ok(vec![self.wave_event(out_at, TAG_START, 0)])
            }
            TriggerKind::Stop => {
                let zero_at = at.ceil_to(SimTime::FSM_TICK);
                self.generation = self.generation.wrapping_add(1);
                self.latched = None;
                self.state = FsmState::Idle;
                self.close_open_span(zero_at);
                Ok(Vec::new())
            }
            TriggerKind::Branch0 | TriggerKind::Branch1 => {
                let b = if kind == TriggerKind::Branch0 { 0 } else { 1 };
                match self.state {
                    FsmState::Waiting { entry } => {
                        let e = self.playlist.as_ref().expect("checked").entries[entry as usize];
                        let next = if b == 0 { e.next_branch0 } else { e.next_branch1 };
                        self.state = FsmState::Starting;
                        Ok(vec![self.wave_event(out_at, TAG_START, next)])
                    }
                    FsmState::Playing { .. } | FsmState::Starting => {
                        self.latched = Some(b);
                        Ok(Vec::new())
                    }
                    FsmState::Idle => Ok(Vec::new()),
                }
            }
        }
    }

    /// Enters `entry` at `t`, following wait entries whose branch is latched.
    fn begin_entry(&mut self, mut entry: u16, t: SimTime) -> Vec<Event> {
        let playlist = self.playlist.clone().expect("playlist present while running");
        // Each latched branch is consumed once, so this visits at most
        // entries.len() + 1 wait points before it must play or halt.
        for _ in 0..=playlist.entries.len() + 1 {
            if entry == HALT || entry as usize >= playlist.entries.len() {
                self.state = FsmState::Idle;
                return Vec::new();
            }
            let e = playlist.entries[entry as usize];
            if e.flags.wait_for_trigger {
                match self.latched.take() {
                    Some(0) => entry = e.next_branch0,
                    Some(_) => entry = e.next_branch1,
                    None => {
                        self.state = FsmState::Waiting { entry };
                        return Vec::new();
                    }
                }
                continue;
            }
            let len = self.segment_len(e.segment_id);
            if len == 0 {
                self.state = FsmState::Idle;
                return Vec::new();
            }
            let dur = SimTime::from_ps(len as u64 * e.repeat as u64 * SimTime::DAC_PERIOD.ps());
            self.close_open_span(t);
            self.spans.push(Span {
                start: t,
                end: t + dur,
                entry,
                segment_id: e.segment_id,
                seg_len: len,
            });
            self.state = FsmState::Playing { entry };
            return vec![self.wave_event(t + dur, TAG_END, entry)];
        }
        self.state = FsmState::Idle;
        Vec::new()
    }

    /// Applies one engine event addressed to this module.
    pub fn handle_event(&mut self, ev: &Event) -> Result<Vec<Event>, AwgError> {
        match ev.kind {
            EventKind::TriggerDelivery => {
                let code = *ev.payload.first().unwrap_or(&0);
                let kind = TriggerKind::from_code(code).ok_or(AwgError::UnknownTrigger(code))?;
                self.on_trigger(kind, ev.due)
            }
            EventKind::WaveStart | EventKind::WaveEnd if ev.payload.len() == 7 => {
                let gen = u32::from_be_bytes(ev.payload[1..5].try_into().expect("len checked"));
                let entry = u16::from_be_bytes(ev.payload[5..7].try_into().expect("len checked"));
                if gen != self.generation || self.playlist.is_none() {
                    return Ok(Vec::new());
                }
                if ev.payload[0] == TAG_START {
                    Ok(self.begin_entry(entry, ev.due))
                } else {
                    let e = self.playlist.as_ref().expect("checked").entries[entry as usize];
                    if e.flags.end {
                        self.state = FsmState::Idle;
                        Ok(Vec::new())
                    } else {
                        Ok(self.begin_entry(e.next_default, ev.due))
                    }
                }
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Code on `channel` at DAC sample index `idx` (time `idx · 500 ps`),
    /// or `None` when no segment is playing.
    fn code_at(&self, channel: usize, idx: i64, hint: &mut usize) -> Option<i16> {
        if idx < 0 {
            return None;
        }
        let t = idx as u64 * SimTime::DAC_PERIOD.ps();
        while *hint < self.spans.len() && self.spans[*hint].end.ps() <= t {
            *hint += 1;
        }
        let s = self.spans.get(*hint)?;
        if t < s.start.ps() {
            return None;
        }
        let off = ((t - s.start.ps()) / SimTime::DAC_PERIOD.ps()) % s.seg_len as u64;
        Some(
            self.channels[channel]
                .get(&s.segment_id)
                .and_then(|seg| seg.get(off as usize))
                .map_or(0, |c| c.code()),
        )
    }

    /// Output volts on `channel` for DAC sample indices `first .. first+n`.
    pub fn channel_volts(&self, channel: usize, first: i64, n: usize) -> Vec<f64> {
        let first_t = first.max(0) as u64 * SimTime::DAC_PERIOD.ps();
        let mut hint = self.spans.partition_point(|s| s.end.ps() <= first_t);
        let noise_seed = self.dc.seed ^ (self.block.0 as u64) << 32 ^ channel as u64;
        let noise = signal::gaussian_noise(noise_seed, first.max(0) as u64, n, self.dc.noise_rms());
        (0..n)
            .map(|k| {
                let idx = first + k as i64;
                let code = self.code_at(channel, idx, &mut hint).unwrap_or(self.dc.level_code);
                let t_s = idx as f64 * SimTime::DAC_PERIOD.ps() as f64 * 1e-12;
                self.dc.volts(code) + noise[k] + self.dc.drift_v_per_s * t_s
            })
            .collect()
    }

    /// All four channels at 2 GS/s for sample times in `[t0, t1)`. Returns the
    /// time of the first sample and the per-channel voltages.
    pub fn render(&self, t0: SimTime, t1: SimTime) -> (SimTime, [Vec<f64>; CHANNELS]) {
        let p = SimTime::DAC_PERIOD.ps();
        let first = t0.ps().div_ceil(p);
        let end = t1.ps().div_ceil(p);
        let n = end.saturating_sub(first) as usize;
        let out = std::array::from_fn(|ch| self.channel_volts(ch, first as i64, n));
        (SimTime::from_ps(first * p), out)
    }

    /// Up-converted output of mixer `pair` sampled at `fs_hz` starting at
    /// `t0_ps` (may be negative; the DAC is idle before t = 0).
    pub fn render_rf(&self, pair: usize, t0_ps: i64, n: usize, fs_hz: f64) -> Result<Vec<f64>, AwgError> {
        let stage = match &self.personality {
            Personality::Rf(s) => s,
            Personality::If => return Err(AwgError::NotRf),
        };
        if pair > 1 {
            return Err(AwgError::BadChannel(pair as u8));
        }
        let dac_p = SimTime::DAC_PERIOD.ps() as f64;
        let step_ps = 1e12 / fs_hz;
        let pos = |k: usize| (t0_ps as f64 + k as f64 * step_ps) / dac_p;
        let first = pos(0).floor() as i64;
        let last = pos(n.saturating_sub(1)).floor() as i64 + 1;
        let count = (last - first + 1).max(0) as usize;
        let i_dac = self.channel_volts(2 * pair, first, count);
        let q_dac = self.channel_volts(2 * pair + 1, first, count);
        // First-order hold between DAC samples stands in for the
        // reconstruction filter; a zero-order hold would alias its images
        // onto the RF grid.
        let (i_t, q_t): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|k| {
                let x = pos(k);
                let j = (x.floor() as i64 - first) as usize;
                let f = x - x.floor();
                (
                    i_dac[j] * (1.0 - f) + i_dac[j + 1] * f,
                    q_dac[j] * (1.0 - f) + q_dac[j + 1] * f,
                )
            })
            .unzip();
        Ok(mixer::upconvert(
            &i_t,
            &q_t,
            &stage.impairments[pair],
            &stage.correction[pair],
            fs_hz,
            t0_ps,
        )?)
    }

    /// Earliest span start at or after `t`.
    pub fn first_sample_after(&self, t: SimTime) -> Option<SimTime> {
        self.spans.iter().map(|s| s.start).filter(|&s| s >= t).min()
    }
}
