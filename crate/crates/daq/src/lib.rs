// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! DAQ module: IQ down-conversion, 8-bit capture, 12-channel fixed-point
//! demodulation, threshold discrimination and feedback emission.

use std::f64::consts::PI;

use thiserror::Error;

use m2cs_mixer::{self as mixer, MixerError, MixerImpairments, RfTone, RF_SAMPLE_RATE_HZ};
use m2cs_signal::{self as signal, AdcCode, WindowKind, ADC_DEFAULT_FS_VPP};
use m2cs_timebase::{BlockId, Event, EventKind, SimTime};

pub const DEMOD_CHANNELS: usize = 12;
pub const MAX_WINDOW_NS: u32 = 8_000;
pub const RESULT_CAPACITY: usize = 60_000;
/// 10 ms of raw (i, q) pairs per input at 1 GS/s; later samples are dropped.
pub const RAW_CAPACITY_PER_INPUT: usize = 10_000_000;
pub const SAMPLE_RATE_HZ: f64 = 1e9;
/// Input-referred noise that puts a −0.2 dBFS tone at 7.2 effective bits.
pub const DEFAULT_NOISE_RMS_V: f64 = 1.5e-3;
/// Q1.15 unit.
pub const FACTOR_ONE: f64 = 32768.0;

#[derive(Debug, Clone, PartialEq)]
pub enum RfSignal {
    Silent,
    Tones(Vec<RfTone>),
    /// RF samples at [`RF_SAMPLE_RATE_HZ`]; sample `k` is at `t0_ps + 50·k` ps.
    Samples {
        t0_ps: i64,
        samples: Vec<f64>,
    },
}

/// What arrives at one RF input during a capture window.
#[derive(Debug, Clone, PartialEq)]
pub struct RfInput {
    pub signal: RfSignal,
    /// Extra white noise referred to the baseband outputs, volts rms.
    pub baseband_noise_rms_v: f64,
}

impl RfInput {
    pub fn silent() -> Self {
        RfInput {
            signal: RfSignal::Silent,
            baseband_noise_rms_v: 0.0,
        }
    }

    pub fn tones(tones: Vec<RfTone>) -> Self {
        RfInput {
            signal: RfSignal::Tones(tones),
            baseband_noise_rms_v: 0.0,
        }
    }
}

/// RF sample grid a [`RfSignal::Samples`] source must cover for `window`.
pub fn rf_span(window: CaptureWindow) -> (i64, usize) {
    let margin = mixer::downconvert_margin(RF_SAMPLE_RATE_HZ, SAMPLE_RATE_HZ);
    let ratio = (RF_SAMPLE_RATE_HZ / SAMPLE_RATE_HZ) as usize;
    let step = (1e12 / RF_SAMPLE_RATE_HZ) as i64;
    (
        window.start.ps() as i64 - margin as i64 * step,
        window.len_ns as usize * ratio + 2 * margin,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemodChannelConfig {
    pub channel: u8,
    /// Signed demodulation frequency, Hz.
    pub freq_hz: f64,
    pub phase_millideg: i32,
    pub window: WindowKind,
    pub length_ns: u32,
    pub input: u8,
}

impl DemodChannelConfig {
    pub fn validate(&self) -> Result<(), DaqError> {
        if self.channel as usize >= DEMOD_CHANNELS {
            return Err(DaqError::BadChannel(self.channel));
        }
        if self.input > 1 {
            return Err(DaqError::BadInput(self.input));
        }
        if self.length_ns == 0 {
            return Err(DaqError::BadConfig(format!("channel {} has zero length", self.channel)));
        }
        if self.length_ns > MAX_WINDOW_NS {
            return Err(DaqError::WindowTooLong { len_ns: self.length_ns });
        }
        if !self.freq_hz.is_finite() {
            return Err(DaqError::BadConfig(format!(
                "channel {} frequency is not finite",
                self.channel
            )));
        }
        Ok(())
    }

    pub fn phase_rad(&self) -> f64 {
        self.phase_millideg as f64 * 1e-3 * PI / 180.0
    }
}

/// Windowed demodulation factors in Q1.15.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemodFactors {
    pub i: Vec<i16>,
    pub q: Vec<i16>,
}

fn to_q15(x: f64) -> i16 {
    (x * FACTOR_ONE).round().clamp(-32768.0, 32767.0) as i16
}

impl DemodFactors {
    /// `demod_I[n] = w[n]·cos(−ω·n·Δt + φ)`, `demod_Q[n] = w[n]·sin(−ω·n·Δt + φ)`, Δt = 1 ns.
    pub fn new(cfg: &DemodChannelConfig) -> Self {
        let n = cfg.length_ns as usize;
        let w = signal::window(cfg.window, n);
        let phi = cfg.phase_rad() / (2.0 * PI);
        let (i, q) = (0..n)
            .map(|k| {
                let a = 2.0 * PI * (-cfg.freq_hz * k as f64 * 1e-9 + phi).rem_euclid(1.0);
                (to_q15(w[k] * a.cos()), to_q15(w[k] * a.sin()))
            })
            .unzip();
        DemodFactors { i, q }
    }
}

/// `I = Σ i·dI − q·dQ`, `Q = Σ i·dQ + q·dI`, accumulated exactly.
pub fn demodulate_with(i: &[AdcCode], q: &[AdcCode], f: &DemodFactors) -> Result<(i64, i64), DaqError> {
    if i.len() != f.i.len() || q.len() != f.i.len() {
        return Err(DaqError::LengthMismatch {
            expected: f.i.len(),
            i: i.len(),
            q: q.len(),
        });
    }
    let mut acc_i = 0i64;
    let mut acc_q = 0i64;
    for k in 0..i.len() {
        let (x, y) = (i[k].0 as i64, q[k].0 as i64);
        let (di, dq) = (f.i[k] as i64, f.q[k] as i64);
        acc_i += x * di - y * dq;
        acc_q += x * dq + y * di;
    }
    Ok((acc_i, acc_q))
}

pub fn demodulate(i: &[AdcCode], q: &[AdcCode], cfg: &DemodChannelConfig) -> Result<IQResult, DaqError> {
    let (i_acc, q_acc) = demodulate_with(i, q, &DemodFactors::new(cfg))?;
    Ok(IQResult {
        channel: cfg.channel,
        shot_index: 0,
        i_acc,
        q_acc,
        state_bit: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IQResult {
    pub channel: u8,
    pub shot_index: u32,
    pub i_acc: i64,
    pub q_acc: i64,
    pub state_bit: u8,
}

/// State 1 iff `wx·I + wy·Q + b > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Threshold {
    pub wx: i16,
    pub wy: i16,
    pub b: i64,
}

impl Threshold {
    pub fn state(&self, i: i64, q: i64) -> u8 {
        let s = self.wx as i128 * i as i128 + self.wy as i128 * q as i128 + self.b as i128;
        (s > 0) as u8
    }

    /// Perpendicular bisector of the cloud centres, pointing towards `c1`.
    pub fn bisector(c0: (f64, f64), c1: (f64, f64)) -> Threshold {
        let (dx, dy) = (c1.0 - c0.0, c1.1 - c0.1);
        let scale = 32767.0 / dx.abs().max(dy.abs()).max(f64::MIN_POSITIVE);
        let wx = (dx * scale).round() as i16;
        let wy = (dy * scale).round() as i16;
        let (mx, my) = ((c0.0 + c1.0) / 2.0, (c0.1 + c1.1) / 2.0);
        Threshold {
            wx,
            wy,
            b: -(wx as f64 * mx + wy as f64 * my).round() as i64,
        }
    }
}

pub fn discriminate(r: &mut IQResult, th: &Threshold) -> u8 {
    r.state_bit = th.state(r.i_acc, r.q_acc);
    r.state_bit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DaqLatency {
    pub processing_ns: u32,
    pub cable_ns: u32,
}

impl Default for DaqLatency {
    fn default() -> Self {
        DaqLatency {
            processing_ns: 48,
            cable_ns: 18,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureWindow {
    pub start: SimTime,
    pub len_ns: u32,
}

impl CaptureWindow {
    pub fn end(&self) -> SimTime {
        self.start + SimTime::from_ns(self.len_ns as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capture {
    pub i: Vec<AdcCode>,
    pub q: Vec<AdcCode>,
}

/// State bits of one sampling window as carried to the backplane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackBits {
    pub daq_slot: u8,
    pub mask: u16,
    pub bits: u16,
}

impl FeedbackBits {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = vec![self.daq_slot];
        v.extend_from_slice(&self.mask.to_be_bytes());
        v.extend_from_slice(&self.bits.to_be_bytes());
        v
    }

    pub fn decode(p: &[u8]) -> Option<Self> {
        (p.len() == 5).then(|| FeedbackBits {
            daq_slot: p[0],
            mask: u16::from_be_bytes([p[1], p[2]]),
            bits: u16::from_be_bytes([p[3], p[4]]),
        })
    }

    pub fn bit(&self, channel: u8) -> Option<u8> {
        (self.mask >> channel & 1 == 1).then_some((self.bits >> channel & 1) as u8)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DaqError {
    #[error("window of {len_ns} ns exceeds 8 µs")]
    WindowTooLong { len_ns: u32 },
    #[error("result or raw storage full")]
    StorageFull,
    #[error("expected {expected} samples, got i={i} q={q}")]
    LengthMismatch { expected: usize, i: usize, q: usize },
    #[error("sampling windows overlap")]
    OverlappingWindows,
    #[error("a run is active")]
    RunActive,
    #[error("demodulation channel {0} does not exist")]
    BadChannel(u8),
    #[error("RF input {0} does not exist")]
    BadInput(u8),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Mixer(#[from] MixerError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaqConfig {
    pub lo_hz: f64,
    pub mixers: [MixerImpairments; 2],
    pub full_scale_vpp: f64,
    pub noise_rms_v: f64,
    pub latency: DaqLatency,
    pub record_raw: bool,
}

impl DaqConfig {
    pub fn new(lo_hz: f64) -> Self {
        DaqConfig {
            lo_hz,
            mixers: [MixerImpairments::ideal(lo_hz); 2],
            full_scale_vpp: ADC_DEFAULT_FS_VPP,
            noise_rms_v: DEFAULT_NOISE_RMS_V,
            latency: DaqLatency::default(),
            record_raw: false,
        }
    }
}

const TAG_WINDOW_END: u8 = 1;

#[derive(Debug, Clone)]
pub struct Daq {
    block: BlockId,
    cfg: DaqConfig,
    channels: [Option<(DemodChannelConfig, DemodFactors)>; DEMOD_CHANNELS],
    thresholds: [Threshold; DEMOD_CHANNELS],
    results: Vec<IQResult>,
    raw: [Vec<(i8, i8)>; 2],
    raw_dropped: u64,
    run_active: bool,
    next_shot: u32,
    generation: u32,
    seed: u64,
}

impl Daq {
    pub fn new(block: BlockId, cfg: DaqConfig) -> Self {
        Daq {
            block,
            cfg,
            channels: Default::default(),
            thresholds: [Threshold::default(); DEMOD_CHANNELS],
            results: Vec::new(),
            raw: Default::default(),
            raw_dropped: 0,
            run_active: false,
            next_shot: 0,
            generation: 0,
            seed: 0,
        }
    }

    pub fn block(&self) -> BlockId {
        self.block
    }

    pub fn config(&self) -> &DaqConfig {
        &self.cfg
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn set_noise_rms(&mut self, v: f64) {
        self.cfg.noise_rms_v = v;
    }

    pub fn set_record_raw(&mut self, on: bool) {
        self.cfg.record_raw = on;
    }

    /// Retunes the LO on both inputs, keeping their impairments.
    pub fn set_lo(&mut self, lo_hz: f64) {
        self.cfg.lo_hz = lo_hz;
        for m in &mut self.cfg.mixers {
            m.lo_hz = lo_hz;
        }
    }

    pub fn set_mixer(&mut self, input: u8, imp: MixerImpairments) -> Result<(), DaqError> {
        imp.validate()?;
        let m = self
            .cfg
            .mixers
            .get_mut(input as usize)
            .ok_or(DaqError::BadInput(input))?;
        *m = MixerImpairments {
            lo_hz: self.cfg.lo_hz,
            ..imp
        };
        Ok(())
    }

    pub fn configure_channel(&mut self, cfg: DemodChannelConfig) -> Result<(), DaqError> {
        cfg.validate()?;
        self.channels[cfg.channel as usize] = Some((cfg, DemodFactors::new(&cfg)));
        Ok(())
    }

    pub fn disable_channel(&mut self, channel: u8) -> Result<(), DaqError> {
        let slot = self
            .channels
            .get_mut(channel as usize)
            .ok_or(DaqError::BadChannel(channel))?;
        *slot = None;
        Ok(())
    }

    pub fn clear_channels(&mut self) {
        self.channels = Default::default();
    }

    pub fn channel(&self, channel: u8) -> Option<&DemodChannelConfig> {
        self.channels.get(channel as usize)?.as_ref().map(|(c, _)| c)
    }

    pub fn enabled_channels(&self) -> impl Iterator<Item = &DemodChannelConfig> {
        self.channels.iter().flatten().map(|(c, _)| c)
    }

    pub fn set_threshold(&mut self, channel: u8, th: Threshold) -> Result<(), DaqError> {
        *self
            .thresholds
            .get_mut(channel as usize)
            .ok_or(DaqError::BadChannel(channel))? = th;
        Ok(())
    }

    pub fn threshold(&self, channel: u8) -> Option<Threshold> {
        self.thresholds.get(channel as usize).copied()
    }

    /// Longest enabled channel; the sampling window opened by a trigger.
    pub fn window_len_ns(&self) -> Option<u32> {
        self.enabled_channels().map(|c| c.length_ns).max()
    }

    pub fn run_active(&self) -> bool {
        self.run_active
    }

    /// Clears results and raw storage and opens a run.
    pub fn begin_run(&mut self) {
        self.results.clear();
        self.raw = Default::default();
        self.raw_dropped = 0;
        self.next_shot = 0;
        self.run_active = true;
    }

    pub fn end_run(&mut self) {
        self.run_active = false;
        self.generation = self.generation.wrapping_add(1);
    }

    pub fn results(&self) -> &[IQResult] {
        &self.results
    }

    fn baseband(&self, input: u8, window: CaptureWindow, rf: &RfInput) -> Result<(Vec<f64>, Vec<f64>), DaqError> {
        let imp = &self.cfg.mixers[input as usize];
        let n = window.len_ns as usize;
        let t0 = window.start.ps() as i64;
        match &rf.signal {
            RfSignal::Silent => Ok((vec![imp.dc_i; n], vec![imp.dc_q; n])),
            RfSignal::Tones(tones) => Ok(mixer::downconvert_tones(
                tones,
                RF_SAMPLE_RATE_HZ,
                imp,
                SAMPLE_RATE_HZ,
                t0,
                n,
            )?),
            RfSignal::Samples { t0_ps, samples } => {
                let (need_t0, need_n) = rf_span(window);
                let step = (1e12 / RF_SAMPLE_RATE_HZ) as i64;
                let mut rf_buf = vec![0.0; need_n];
                for (k, v) in rf_buf.iter_mut().enumerate() {
                    let t = need_t0 + k as i64 * step - t0_ps;
                    if t >= 0 && t % step == 0 {
                        if let Some(x) = samples.get((t / step) as usize) {
                            *v = *x;
                        }
                    }
                }
                let (i, q) = mixer::downconvert(&rf_buf, RF_SAMPLE_RATE_HZ, imp, SAMPLE_RATE_HZ, need_t0)?;
                let skip = (t0 - need_t0) as usize / 1000;
                Ok((i[skip..skip + n].to_vec(), q[skip..skip + n].to_vec()))
            }
        }
    }

    /// Down-converts, adds input noise and digitizes one input.
    pub fn capture(
        &mut self,
        input: u8,
        window: CaptureWindow,
        rf: &RfInput,
        noise_seed: u64,
    ) -> Result<Capture, DaqError> {
        if input > 1 {
            return Err(DaqError::BadInput(input));
        }
        if window.len_ns > MAX_WINDOW_NS {
            return Err(DaqError::WindowTooLong { len_ns: window.len_ns });
        }
        let n = window.len_ns as usize;
        let (bi, bq) = self.baseband(input, window, rf)?;
        let sigma = self.cfg.noise_rms_v.hypot(rf.baseband_noise_rms_v);
        let ni = signal::gaussian_noise(signal::mix_seed(noise_seed, 1), 0, n, sigma);
        let nq = signal::gaussian_noise(signal::mix_seed(noise_seed, 2), 0, n, sigma);
        let fs = self.cfg.full_scale_vpp;
        let i: Vec<AdcCode> = bi
            .iter()
            .zip(&ni)
            .map(|(a, b)| AdcCode::from_volts(a + b, fs))
            .collect();
        let q: Vec<AdcCode> = bq
            .iter()
            .zip(&nq)
            .map(|(a, b)| AdcCode::from_volts(a + b, fs))
            .collect();
        if self.cfg.record_raw {
            let raw = &mut self.raw[input as usize];
            if raw.len() + n <= RAW_CAPACITY_PER_INPUT {
                raw.extend(i.iter().zip(&q).map(|(a, b)| (a.0, b.0)));
            } else {
                self.raw_dropped += n as u64;
            }
        }
        Ok(Capture { i, q })
    }

    /// Demodulates and discriminates every enabled channel for one window.
    fn process_window(
        &mut self,
        window: CaptureWindow,
        source: &mut dyn FnMut(u8, CaptureWindow) -> RfInput,
        seed: u64,
    ) -> Result<Vec<IQResult>, DaqError> {
        let enabled: Vec<(DemodChannelConfig, DemodFactors)> = self.channels.iter().flatten().cloned().collect();
        if self.results.len() + enabled.len() > RESULT_CAPACITY {
            return Err(DaqError::StorageFull);
        }
        let shot = self.next_shot;
        let mut caps: [Option<Capture>; 2] = [None, None];
        for input in 0..2u8 {
            if enabled.iter().any(|(c, _)| c.input == input) {
                let rf = source(input, window);
                caps[input as usize] = Some(self.capture(input, window, &rf, signal::mix_seed(seed, input as u64))?);
            }
        }
        let mut out = Vec::with_capacity(enabled.len());
        for (cfg, factors) in &enabled {
            let cap = caps[cfg.input as usize].as_ref().expect("captured above");
            let n = cfg.length_ns as usize;
            let (i_acc, q_acc) = demodulate_with(&cap.i[..n], &cap.q[..n], factors)?;
            let mut r = IQResult {
                channel: cfg.channel,
                shot_index: shot,
                i_acc,
                q_acc,
                state_bit: 0,
            };
            discriminate(&mut r, &self.thresholds[cfg.channel as usize]);
            out.push(r);
        }
        self.next_shot += 1;
        self.results.extend_from_slice(&out);
        Ok(out)
    }

    /// One result set per window, in window order; windows must not overlap.
    pub fn multi_readout(
        &mut self,
        plan: &[CaptureWindow],
        mut source: impl FnMut(u8, CaptureWindow) -> RfInput,
        seed: u64,
    ) -> Result<Vec<IQResult>, DaqError> {
        for w in plan {
            if w.len_ns > MAX_WINDOW_NS {
                return Err(DaqError::WindowTooLong { len_ns: w.len_ns });
            }
        }
        for (a, wa) in plan.iter().enumerate() {
            for wb in &plan[a + 1..] {
                if wa.start < wb.end() && wb.start < wa.end() {
                    return Err(DaqError::OverlappingWindows);
                }
            }
        }
        let mut out = Vec::new();
        for (k, w) in plan.iter().enumerate() {
            out.extend(self.process_window(*w, &mut source, signal::mix_seed(seed, k as u64))?);
        }
        Ok(out)
    }

    /// Feedback event for the window that closed at `window_end`.
    pub fn emit_feedback(&self, bits: &[(u8, u8)], window_end: SimTime) -> Option<Event> {
        if bits.is_empty() {
            return None;
        }
        let mut fb = FeedbackBits {
            daq_slot: self.block.0 as u8,
            mask: 0,
            bits: 0,
        };
        for &(ch, b) in bits {
            fb.mask |= 1 << ch;
            fb.bits |= ((b & 1) as u16) << ch;
        }
        let lat = self.cfg.latency.processing_ns + self.cfg.latency.cable_ns;
        let at = window_end + SimTime::from_ns(lat as u64);
        Some(Event::new(at, BlockId::BACKPLANE, EventKind::FeedbackResult).with_payload(fb.encode()))
    }

    /// Applies one engine event. `source` supplies the RF seen by each input
    /// during a closing window; `seed` keys that window's noise.
    pub fn handle_event(
        &mut self,
        ev: &Event,
        source: &mut dyn FnMut(u8, CaptureWindow) -> RfInput,
        seed: u64,
    ) -> Result<Vec<Event>, DaqError> {
        match ev.kind {
            EventKind::TriggerDelivery => match ev.payload.first() {
                Some(0x1) => {
                    let Some(len_ns) = self.window_len_ns() else {
                        return Ok(Vec::new());
                    };
                    self.generation = self.generation.wrapping_add(1);
                    let mut p = vec![TAG_WINDOW_END];
                    p.extend_from_slice(&self.generation.to_be_bytes());
                    p.extend_from_slice(&ev.due.ps().to_be_bytes());
                    p.extend_from_slice(&len_ns.to_be_bytes());
                    let end = ev.due + SimTime::from_ns(len_ns as u64);
                    Ok(vec![
                        Event::new(ev.due, self.block, EventKind::SampleWindowStart),
                        Event::new(end, self.block, EventKind::SampleWindowEnd).with_payload(p),
                    ])
                }
                Some(0x2) => {
                    self.generation = self.generation.wrapping_add(1);
                    Ok(Vec::new())
                }
                _ => Ok(Vec::new()),
            },
            EventKind::SampleWindowEnd if ev.payload.len() == 17 => {
                let gen = u32::from_be_bytes(ev.payload[1..5].try_into().expect("len checked"));
                if gen != self.generation || !self.run_active {
                    return Ok(Vec::new());
                }
                let start = SimTime::from_ps(u64::from_be_bytes(ev.payload[5..13].try_into().expect("len checked")));
                let len_ns = u32::from_be_bytes(ev.payload[13..17].try_into().expect("len checked"));
                let window = CaptureWindow { start, len_ns };
                let results = self.process_window(window, source, seed)?;
                let bits: Vec<(u8, u8)> = results.iter().map(|r| (r.channel, r.state_bit)).collect();
                Ok(self.emit_feedback(&bits, ev.due).into_iter().collect())
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Results after index `after` in (shot, channel) order, at most `max`.
    pub fn read_demod(&self, after: usize, max: usize) -> Result<&[IQResult], DaqError> {
        if self.run_active {
            return Err(DaqError::RunActive);
        }
        let start = after.min(self.results.len());
        let end = start.saturating_add(max).min(self.results.len());
        Ok(&self.results[start..end])
    }

    pub fn read_raw(&self, input: u8, offset: usize, max: usize) -> Result<&[(i8, i8)], DaqError> {
        if self.run_active {
            return Err(DaqError::RunActive);
        }
        let raw = self.raw.get(input as usize).ok_or(DaqError::BadInput(input))?;
        let start = offset.min(raw.len());
        Ok(&raw[start..start.saturating_add(max).min(raw.len())])
    }

    pub fn raw_len(&self, input: u8) -> usize {
        self.raw.get(input as usize).map_or(0, Vec::len)
    }

    /// Samples discarded because raw memory was full.
    pub fn raw_dropped(&self) -> u64 {
        self.raw_dropped
    }
}
