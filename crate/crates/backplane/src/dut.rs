// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! What sits on the far side of the cables: the signal each DAQ input sees
//! during a sampling window.

use std::collections::BTreeMap;

use crate::chassis::ModuleBay;
use m2cs_daq::{self as daq, CaptureWindow, RfInput, RfSignal};
use m2cs_mixer::{RfTone, RF_SAMPLE_RATE_HZ};
use m2cs_qubit::bloch::{Rotation, Transmon};
use m2cs_qubit::{readout_signal, QubitParams};
use m2cs_timebase::SimTime;

/// Source wired to one DAQ input.
#[derive(Debug, Clone, PartialEq)]
pub enum InputRoute {
    Silent,
    Tones {
        tones: Vec<RfTone>,
        noise_rms_v: f64,
    },
    /// RF output `pair` of the AWG in `awg_slot`, delayed by the cable.
    Loopback {
        awg_slot: u8,
        pair: u8,
        delay_ns: u32,
    },
    /// Readout of the transmon driven by `xy_slot` (channels 0/1 are the
    /// drive envelope). With `readout_slot` set, the probe tone is present
    /// only while that AWG is playing.
    Transmon {
        xy_slot: u8,
        readout_slot: Option<u8>,
    },
}

/// Outcome of the most recent transmon shot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRecord {
    pub shot: u32,
    /// P1 just before the projective measurement.
    pub p1: f64,
    pub measured: u8,
    pub rotations: usize,
    pub seed: u64,
}

pub trait Dut: Send {
    fn begin_shot(&mut self, shot: u32, at: SimTime, seed: u64);

    /// Signal at `input` of the DAQ in `daq_slot` during `window`.
    /// `intrinsic_noise_v` is the DAQ's own per-quadrature noise.
    fn rf_input(
        &mut self,
        daq_slot: u8,
        input: u8,
        window: CaptureWindow,
        intrinsic_noise_v: f64,
        bay: &ModuleBay,
    ) -> RfInput;
}

/// Patch-panel DUT: a route per DAQ input and at most one transmon.
#[derive(Debug, Clone)]
pub struct Bench {
    routes: BTreeMap<(u8, u8), InputRoute>,
    transmon: Option<Transmon>,
    shot: u32,
    shot_start: SimTime,
    shot_seed: u64,
    measured: Option<u8>,
    last: Option<ShotRecord>,
}

impl Default for Bench {
    fn default() -> Self {
        Bench::new()
    }
}

impl Bench {
    pub fn new() -> Self {
        Bench {
            routes: BTreeMap::new(),
            transmon: None,
            shot: 0,
            shot_start: SimTime::ZERO,
            shot_seed: 0,
            measured: None,
            last: None,
        }
    }

    pub fn route(&mut self, daq_slot: u8, input: u8, r: InputRoute) -> &mut Self {
        self.routes.insert((daq_slot, input), r);
        self
    }

    pub fn routes(&self) -> &BTreeMap<(u8, u8), InputRoute> {
        &self.routes
    }

    pub fn set_transmon(&mut self, params: QubitParams) -> &mut Self {
        self.transmon = Some(Transmon::new(params));
        self
    }

    pub fn transmon_mut(&mut self) -> Option<&mut Transmon> {
        self.transmon.as_mut()
    }

    pub fn last_shot(&self) -> Option<ShotRecord> {
        self.last
    }

    fn rotations(&self, xy_slot: u8, until: SimTime, bay: &ModuleBay) -> Vec<Rotation> {
        let (Some(awg), Some(q)) = (bay.awg(xy_slot), &self.transmon) else {
            return Vec::new();
        };
        let rabi = q.params().rabi_hz_per_v;
        let dac_ns = SimTime::DAC_PERIOD.as_ns_f64();
        awg.spans()
            .iter()
            .filter(|s| s.start >= self.shot_start && s.start < until && s.seg_len > 0)
            .map(|s| {
                let played = ((s.end.min(until).ps() - s.start.ps()) / SimTime::DAC_PERIOD.ps()) as usize;
                let sum = |ch: usize| -> Vec<f64> {
                    let seg = awg.segment(ch, s.segment_id).unwrap_or(&[]);
                    if seg.is_empty() {
                        return Vec::new();
                    }
                    let full = played / seg.len();
                    let part = played % seg.len();
                    let total: f64 = seg.iter().map(|c| c.volts()).sum::<f64>() * full as f64
                        + seg[..part].iter().map(|c| c.volts()).sum::<f64>();
                    vec![total]
                };
                let (si, sq) = (sum(0), sum(1));
                let mut r = Rotation::from_envelope(&si, &sq, dac_ns, rabi, s.start.as_ns_f64());
                r.at_ns = s.start.as_ns_f64() + played as f64 * dac_ns / 2.0;
                r
            })
            .collect()
    }

    fn transmon_input(
        &mut self,
        xy_slot: u8,
        readout_slot: Option<u8>,
        window: CaptureWindow,
        intrinsic: f64,
        bay: &ModuleBay,
    ) -> RfInput {
        if self.transmon.is_none() {
            return RfInput::silent();
        }
        if self.measured.is_none() {
            let rots = self.rotations(xy_slot, window.start, bay);
            let q = self.transmon.as_mut().expect("checked");
            for r in &rots {
                q.apply(r);
            }
            q.advance_to(window.start.as_ns_f64());
            let p1 = q.state().p1();
            let m = q.measure(window.start.as_ns_f64());
            self.measured = Some(m);
            self.last = Some(ShotRecord {
                shot: self.shot,
                p1,
                measured: m,
                rotations: rots.len(),
                seed: self.shot_seed,
            });
        }
        let probing = readout_slot.map_or(true, |s| {
            bay.awg(s).is_some_and(|a| {
                a.spans()
                    .iter()
                    .any(|sp| sp.start < window.end() && sp.end > window.start)
            })
        });
        let params = *self.transmon.as_ref().expect("checked").params();
        let rect = vec![1.0; window.len_ns as usize];
        let sig = readout_signal(
            self.measured.expect("set above"),
            &params,
            window.start.ps() as i64,
            &rect,
        );
        let extra = (sig.noise_rms_v.powi(2) - intrinsic.powi(2)).max(0.0).sqrt();
        if probing {
            RfInput {
                signal: RfSignal::Tones(vec![sig.tone]),
                baseband_noise_rms_v: extra,
            }
        } else {
            RfInput {
                signal: RfSignal::Silent,
                baseband_noise_rms_v: extra,
            }
        }
    }
}

impl Dut for Bench {
    fn begin_shot(&mut self, shot: u32, at: SimTime, seed: u64) {
        self.shot = shot;
        self.shot_start = at;
        self.shot_seed = seed;
        self.measured = None;
        if let Some(q) = &mut self.transmon {
            q.begin_shot(at.as_ns_f64(), seed);
        }
    }

    fn rf_input(
        &mut self,
        daq_slot: u8,
        input: u8,
        window: CaptureWindow,
        intrinsic_noise_v: f64,
        bay: &ModuleBay,
    ) -> RfInput {
        match self.routes.get(&(daq_slot, input)).cloned() {
            None | Some(InputRoute::Silent) => RfInput::silent(),
            Some(InputRoute::Tones { tones, noise_rms_v }) => RfInput {
                signal: RfSignal::Tones(tones),
                baseband_noise_rms_v: noise_rms_v,
            },
            Some(InputRoute::Loopback {
                awg_slot,
                pair,
                delay_ns,
            }) => {
                let Some(awg) = bay.awg(awg_slot) else {
                    return RfInput::silent();
                };
                let (t0, n) = daq::rf_span(window);
                let src_t0 = t0 - delay_ns as i64 * 1000;
                match awg.render_rf(pair as usize, src_t0, n, RF_SAMPLE_RATE_HZ) {
                    Ok(samples) => RfInput {
                        signal: RfSignal::Samples { t0_ps: t0, samples },
                        baseband_noise_rms_v: 0.0,
                    },
                    Err(_) => RfInput::silent(),
                }
            }
            Some(InputRoute::Transmon { xy_slot, readout_slot }) => {
                self.transmon_input(xy_slot, readout_slot, window, intrinsic_noise_v, bay)
            }
        }
    }
}
