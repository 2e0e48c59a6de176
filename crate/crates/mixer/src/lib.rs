// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! IQ mixer with DC offset, gain and quadrature impairments, plus the
//! two-stage search that cancels LO and image leakage.
//!
//! Up-conversion: `RF = (I' + dc_i)·cos(ω_LO t) + g·(Q' + dc_q)·sin(ω_LO t + ε)`
//! where `(I', Q')` is the pre-distorted baseband. Down-conversion mixes with
//! the same LO arms, low-pass filters and decimates.

use std::f64::consts::PI;

use thiserror::Error;

/// Sample rate used for every simulated RF waveform.
pub const RF_SAMPLE_RATE_HZ: f64 = 20e9;
pub const LOAD_OHMS: f64 = 50.0;
/// Reported power of an empty bin.
pub const FLOOR_DBM: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixerImpairments {
    pub dc_i: f64,
    pub dc_q: f64,
    /// Q-arm gain over I-arm gain.
    pub gain_ratio: f64,
    /// Deviation of the LO quadrature split from π/2, radians.
    pub phase_skew: f64,
    pub lo_hz: f64,
}

impl MixerImpairments {
    pub fn ideal(lo_hz: f64) -> Self {
        MixerImpairments {
            dc_i: 0.0,
            dc_q: 0.0,
            gain_ratio: 1.0,
            phase_skew: 0.0,
            lo_hz,
        }
    }

    pub fn validate(&self) -> Result<(), MixerError> {
        let ok = self.gain_ratio > 0.0
            && self.gain_ratio.is_finite()
            && self.phase_skew.abs() < PI / 4.0
            && self.dc_i.is_finite()
            && self.dc_q.is_finite()
            && self.lo_hz >= 0.0
            && self.lo_hz.is_finite();
        if ok {
            Ok(())
        } else {
            Err(MixerError::InvalidImpairments(*self))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixerCorrection {
    pub offset_i: f64,
    pub offset_q: f64,
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Default for MixerCorrection {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl MixerCorrection {
    pub const IDENTITY: MixerCorrection = MixerCorrection {
        offset_i: 0.0,
        offset_q: 0.0,
        m11: 1.0,
        m12: 0.0,
        m21: 0.0,
        m22: 1.0,
    };

    #[inline]
    pub fn apply(&self, i: f64, q: f64) -> (f64, f64) {
        (
            self.m11 * i + self.m12 * q + self.offset_i,
            self.m21 * i + self.m22 * q + self.offset_q,
        )
    }

    /// Exact inverse of the impairment model.
    pub fn closed_form(imp: &MixerImpairments) -> Self {
        MixerCorrection {
            offset_i: -imp.dc_i,
            offset_q: -imp.dc_q,
            m11: 1.0,
            m12: -imp.phase_skew.tan(),
            m21: 0.0,
            m22: 1.0 / (imp.gain_ratio * imp.phase_skew.cos()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageReport {
    pub p_signal_dbm: f64,
    pub p_lo_dbm: f64,
    pub p_image_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageTargets {
    pub lo_dbm: f64,
    pub image_dbm: f64,
}

impl Default for LeakageTargets {
    fn default() -> Self {
        LeakageTargets {
            lo_dbm: -80.0,
            image_dbm: -90.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub correction: MixerCorrection,
    pub before: LeakageReport,
    pub after: LeakageReport,
    /// Leakage evaluations spent by the offset stage and the matrix stage.
    pub evaluations: [usize; 2],
}

#[derive(Debug, Error, PartialEq)]
pub enum MixerError {
    #[error("sample rate {fs_hz} Hz is below the required {required_hz} Hz")]
    NyquistViolation { fs_hz: f64, required_hz: f64 },
    #[error("I and Q lengths differ ({i} vs {q})")]
    LengthMismatch { i: usize, q: usize },
    #[error("{freq_hz} Hz is not centred on a bin of the record")]
    BinMisaligned { freq_hz: f64 },
    #[error("record covers {periods:.1} sideband periods, need at least 100")]
    RecordTooShort { periods: f64 },
    #[error("output rate {fs_out} Hz does not divide input rate {fs_in} Hz")]
    RateRatio { fs_in: f64, fs_out: f64 },
    #[error("impairments out of range: {0:?}")]
    InvalidImpairments(MixerImpairments),
    #[error("calibration missed its targets (lo {:.1} dBm, image {:.1} dBm)", .best.after.p_lo_dbm, .best.after.p_image_dbm)]
    DidNotConverge { best: Box<Calibration> },
}

fn frac(x: f64) -> f64 {
    x.rem_euclid(1.0)
}

/// LO phase in cycles for sample `k` of a record starting at `t0_ps`.
struct LoPhase {
    base: f64,
    step: f64,
}

impl LoPhase {
    fn new(lo_hz: f64, fs_hz: f64, t0_ps: i64) -> Self {
        LoPhase {
            base: frac(lo_hz * (t0_ps as f64 * 1e-12)),
            step: frac(lo_hz / fs_hz),
        }
    }

    #[inline]
    fn radians(&self, k: usize) -> f64 {
        2.0 * PI * frac(self.base + self.step * k as f64)
    }
}

/// Up-converts a baseband pair sampled at `fs_hz`; sample `k` sits at
/// `t0_ps + k/fs_hz`.
pub fn upconvert(
    i_t: &[f64],
    q_t: &[f64],
    imp: &MixerImpairments,
    corr: &MixerCorrection,
    fs_hz: f64,
    t0_ps: i64,
) -> Result<Vec<f64>, MixerError> {
    if i_t.len() != q_t.len() {
        return Err(MixerError::LengthMismatch {
            i: i_t.len(),
            q: q_t.len(),
        });
    }
    if fs_hz <= 2.0 * imp.lo_hz {
        return Err(MixerError::NyquistViolation {
            fs_hz,
            required_hz: 2.0 * imp.lo_hz,
        });
    }
    imp.validate()?;
    let lo = LoPhase::new(imp.lo_hz, fs_hz, t0_ps);
    Ok(i_t
        .iter()
        .zip(q_t)
        .enumerate()
        .map(|(k, (&i, &q))| {
            let (ic, qc) = corr.apply(i, q);
            let th = lo.radians(k);
            (ic + imp.dc_i) * th.cos() + imp.gain_ratio * (qc + imp.dc_q) * (th + imp.phase_skew).sin()
        })
        .collect())
}

/// Blackman-windowed sinc, unity DC gain, cutoff 0.495·fs_out.
pub fn lowpass_taps(fs_in: f64, fs_out: f64) -> Vec<f64> {
    let ratio = (fs_in / fs_out).round().max(1.0) as usize;
    let n = 10 * ratio + 1;
    let half = (n / 2) as f64;
    let fc = 0.495 * fs_out / fs_in;
    let mut h: Vec<f64> = (0..n)
        .map(|k| {
            let x = k as f64 - half;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let a = 2.0 * PI * k as f64 / (n - 1) as f64;
            sinc * (0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos())
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Input samples needed on each side of a window to fill the filter.
pub fn downconvert_margin(fs_in: f64, fs_out: f64) -> usize {
    lowpass_taps(fs_in, fs_out).len() / 2
}

/// Mixes `rf` (sample `k` at `t0_ps + k/fs_in`) down to baseband and
/// decimates to `fs_out`. Output `m` is aligned with input `m·fs_in/fs_out`;
/// samples outside the record are treated as zero.
pub fn downconvert(
    rf: &[f64],
    fs_in: f64,
    imp: &MixerImpairments,
    fs_out: f64,
    t0_ps: i64,
) -> Result<(Vec<f64>, Vec<f64>), MixerError> {
    imp.validate()?;
    let ratio = (fs_in / fs_out).round();
    if ratio < 1.0 || (ratio * fs_out - fs_in).abs() > 1e-6 * fs_in {
        return Err(MixerError::RateRatio { fs_in, fs_out });
    }
    if fs_in <= 2.0 * imp.lo_hz {
        return Err(MixerError::NyquistViolation {
            fs_hz: fs_in,
            required_hz: 2.0 * imp.lo_hz,
        });
    }
    let ratio = ratio as usize;
    let lo = LoPhase::new(imp.lo_hz, fs_in, t0_ps);
    let (mi, mq): (Vec<f64>, Vec<f64>) = rf
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let th = lo.radians(k);
            (2.0 * x * th.cos(), 2.0 * x * (th + imp.phase_skew).sin())
        })
        .unzip();
    let h = lowpass_taps(fs_in, fs_out);
    let half = h.len() / 2;
    let m_out = rf.len() / ratio;
    let filt = |x: &[f64], centre: usize| -> f64 {
        let mut acc = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            let j = centre as isize + half as isize - k as isize;
            if j >= 0 && (j as usize) < x.len() {
                acc += hk * x[j as usize];
            }
        }
        acc
    };
    let i_out = (0..m_out).map(|m| filt(&mi, m * ratio) + imp.dc_i).collect();
    let q_out = (0..m_out)
        .map(|m| -imp.gain_ratio * filt(&mq, m * ratio) + imp.dc_q)
        .collect();
    Ok((i_out, q_out))
}

/// Continuous tone `amplitude·cos(2π·freq·t + phase)` with `t` in absolute
/// simulated seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfTone {
    pub freq_hz: f64,
    pub amplitude_v: f64,
    pub phase_rad: f64,
}

impl RfTone {
    /// Phase in cycles at absolute time `t_ps`.
    pub fn cycles_at(&self, t_ps: i64) -> f64 {
        frac(self.freq_hz * (t_ps as f64 * 1e-12) + self.phase_rad / (2.0 * PI))
    }

    pub fn render(&self, t0_ps: i64, n: usize, fs_hz: f64) -> Vec<f64> {
        let base = self.cycles_at(t0_ps);
        let step = frac(self.freq_hz / fs_hz);
        (0..n)
            .map(|k| self.amplitude_v * (2.0 * PI * frac(base + step * k as f64)).cos())
            .collect()
    }
}

/// Zero-phase response of [`lowpass_taps`] at `f_hz`.
pub fn lowpass_response(taps: &[f64], f_hz: f64, fs_in: f64) -> f64 {
    let half = (taps.len() / 2) as f64;
    taps.iter()
        .enumerate()
        .map(|(k, h)| h * (2.0 * PI * f_hz * (k as f64 - half) / fs_in).cos())
        .sum()
}

/// Closed-form [`downconvert`] of a sum of tones: the same filter applied to
/// each mixing product analytically, without edge effects. Output `m` is at
/// `t0_ps + m/fs_out`.
pub fn downconvert_tones(
    tones: &[RfTone],
    fs_in: f64,
    imp: &MixerImpairments,
    fs_out: f64,
    t0_ps: i64,
    n_out: usize,
) -> Result<(Vec<f64>, Vec<f64>), MixerError> {
    imp.validate()?;
    let ratio = (fs_in / fs_out).round();
    if ratio < 1.0 || (ratio * fs_out - fs_in).abs() > 1e-6 * fs_in {
        return Err(MixerError::RateRatio { fs_in, fs_out });
    }
    let taps = lowpass_taps(fs_in, fs_out);
    let mut i_out = vec![imp.dc_i; n_out];
    let mut q_out = vec![imp.dc_q; n_out];
    let lo = RfTone {
        freq_hz: imp.lo_hz,
        amplitude_v: 1.0,
        phase_rad: 0.0,
    };
    let lo_base = lo.cycles_at(t0_ps);
    let lo_step = frac(imp.lo_hz / fs_out);
    for tone in tones {
        let h_diff = lowpass_response(&taps, tone.freq_hz - imp.lo_hz, fs_in);
        let h_sum = lowpass_response(&taps, tone.freq_hz + imp.lo_hz, fs_in);
        let base = tone.cycles_at(t0_ps);
        let step = frac(tone.freq_hz / fs_out);
        let a = tone.amplitude_v;
        for m in 0..n_out {
            let ph = 2.0 * PI * frac(base + step * m as f64);
            let th = 2.0 * PI * frac(lo_base + lo_step * m as f64);
            let (d, s) = (ph - th, ph + th);
            i_out[m] += a * (h_diff * d.cos() + h_sum * s.cos());
            q_out[m] -= imp.gain_ratio * a * (h_sum * (s + imp.phase_skew).sin() - h_diff * (d - imp.phase_skew).sin());
        }
    }
    Ok((i_out, q_out))
}

fn amplitude_to_dbm(amp_v: f64) -> f64 {
    let watts = amp_v * amp_v / 2.0 / LOAD_OHMS;
    if watts <= 0.0 {
        FLOOR_DBM
    } else {
        (10.0 * (watts / 1e-3).log10()).max(FLOOR_DBM)
    }
}

fn bin_of(freq_hz: f64, fs_hz: f64, n: usize) -> Result<usize, MixerError> {
    let c = freq_hz * n as f64 / fs_hz;
    let r = c.round();
    if (c - r).abs() > 1e-6 || r < 0.0 || r > (n / 2) as f64 {
        return Err(MixerError::BinMisaligned { freq_hz });
    }
    Ok(r as usize)
}

/// Amplitude of the component at integer bin `c` of an `n`-sample record.
fn bin_amplitude(x: &[f64], c: usize) -> f64 {
    let n = x.len();
    let (mut re, mut im) = (0.0, 0.0);
    for (k, &v) in x.iter().enumerate() {
        let a = 2.0 * PI * ((c * k) % n) as f64 / n as f64;
        re += v * a.cos();
        im -= v * a.sin();
    }
    let scale = if c == 0 || 2 * c == n { 1.0 } else { 2.0 };
    scale * (re * re + im * im).sqrt() / n as f64
}

/// Powers at `lo+sb`, `lo` and `lo−sb`, dBm into 50 Ω.
pub fn measure_leakage(rf: &[f64], lo_hz: f64, sb_hz: f64, fs_hz: f64) -> Result<LeakageReport, MixerError> {
    let n = rf.len();
    let periods = n as f64 * sb_hz / fs_hz;
    if periods < 100.0 - 1e-9 {
        return Err(MixerError::RecordTooShort { periods });
    }
    let bins = [
        bin_of(lo_hz + sb_hz, fs_hz, n)?,
        bin_of(lo_hz, fs_hz, n)?,
        bin_of(lo_hz - sb_hz, fs_hz, n)?,
    ];
    let p = bins.map(|c| amplitude_to_dbm(bin_amplitude(rf, c)));
    Ok(LeakageReport {
        p_signal_dbm: p[0],
        p_lo_dbm: p[1],
        p_image_dbm: p[2],
    })
}

/// Shortest record of at least `min_len` samples on which every frequency
/// falls exactly on a bin.
pub fn coherent_length(freqs_hz: &[f64], fs_hz: f64, min_len: usize) -> Option<usize> {
    (min_len..min_len.saturating_mul(4).max(min_len + 200_000)).find(|&n| {
        freqs_hz.iter().all(|f| {
            let c = f * n as f64 / fs_hz;
            (c - c.round()).abs() < 1e-6
        })
    })
}

/// Single-sideband test tone: `I = A·cos(ω_sb t)`, `Q = −A·sin(ω_sb t)`.
pub fn sideband_tone(n: usize, sb_hz: f64, fs_hz: f64, amplitude: f64) -> (Vec<f64>, Vec<f64>) {
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * frac(sb_hz * k as f64 / fs_hz);
            (amplitude * a.cos(), -amplitude * a.sin())
        })
        .unzip()
}

/// Calibration test-tone amplitude, volts.
pub const CAL_TONE_V: f64 = 0.5;
/// Per-stage leakage-evaluation budget.
pub const STAGE_BUDGET: usize = 200;

/// Precomputed spectrum-analyzer view of one up-conversion setup. Each
/// evaluation costs one pass over the record with no trigonometry.
struct Bench {
    imp: MixerImpairments,
    i_bb: Vec<f64>,
    q_bb: Vec<f64>,
    lo_cos: Vec<f64>,
    lo_sin: Vec<f64>,
    basis: [(Vec<f64>, Vec<f64>, f64); 3],
    n: usize,
}

impl Bench {
    fn new(imp: &MixerImpairments, sb_hz: f64) -> Result<Self, MixerError> {
        imp.validate()?;
        let fs = RF_SAMPLE_RATE_HZ;
        if fs <= 2.0 * (imp.lo_hz + sb_hz) {
            return Err(MixerError::NyquistViolation {
                fs_hz: fs,
                required_hz: 2.0 * (imp.lo_hz + sb_hz),
            });
        }
        let min_len = (100.0 * fs / sb_hz).ceil() as usize;
        let n = coherent_length(&[imp.lo_hz, sb_hz], fs, min_len)
            .ok_or(MixerError::BinMisaligned { freq_hz: imp.lo_hz })?;
        let (i_bb, q_bb) = sideband_tone(n, sb_hz, fs, CAL_TONE_V);
        let lo = LoPhase::new(imp.lo_hz, fs, 0);
        let lo_cos = (0..n).map(|k| lo.radians(k).cos()).collect();
        let lo_sin = (0..n).map(|k| (lo.radians(k) + imp.phase_skew).sin()).collect();
        let mk = |f: f64| -> Result<(Vec<f64>, Vec<f64>, f64), MixerError> {
            let c = bin_of(f, fs, n)?;
            let (cs, sn) = (0..n)
                .map(|k| {
                    let a = 2.0 * PI * ((c * k) % n) as f64 / n as f64;
                    (a.cos(), a.sin())
                })
                .unzip();
            Ok((cs, sn, if c == 0 || 2 * c == n { 1.0 } else { 2.0 }))
        };
        let basis = [mk(imp.lo_hz + sb_hz)?, mk(imp.lo_hz)?, mk(imp.lo_hz - sb_hz)?];
        Ok(Bench {
            imp: *imp,
            i_bb,
            q_bb,
            lo_cos,
            lo_sin,
            basis,
            n,
        })
    }

    fn eval(&self, corr: &MixerCorrection) -> LeakageReport {
        let mut acc = [[0.0f64; 2]; 3];
        for k in 0..self.n {
            let (ic, qc) = corr.apply(self.i_bb[k], self.q_bb[k]);
            let x = (ic + self.imp.dc_i) * self.lo_cos[k] + self.imp.gain_ratio * (qc + self.imp.dc_q) * self.lo_sin[k];
            for (a, (cs, sn, _)) in acc.iter_mut().zip(&self.basis) {
                a[0] += x * cs[k];
                a[1] -= x * sn[k];
            }
        }
        let p: Vec<f64> = acc
            .iter()
            .zip(&self.basis)
            .map(|(a, (_, _, s))| amplitude_to_dbm(s * (a[0] * a[0] + a[1] * a[1]).sqrt() / self.n as f64))
            .collect();
        LeakageReport {
            p_signal_dbm: p[0],
            p_lo_dbm: p[1],
            p_image_dbm: p[2],
        }
    }
}

/// Nelder–Mead on two parameters with standard coefficients. Returns the
/// best point, its value and the number of evaluations used.
fn nelder_mead2(
    mut f: impl FnMut([f64; 2]) -> f64,
    x0: [f64; 2],
    f0: f64,
    step: [f64; 2],
    budget: usize,
    xtol: f64,
) -> ([f64; 2], f64, usize) {
    let mut evals = 0;
    let mut call = |x: [f64; 2], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut s: Vec<([f64; 2], f64)> = vec![(x0, f0)];
    for d in 0..2 {
        if evals + 1 >= budget {
            break;
        }
        let mut x = x0;
        x[d] += step[d];
        let fx = call(x, &mut evals);
        s.push((x, fx));
    }
    if s.len() < 3 {
        let best = s.iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty");
        return (best.0, best.1, evals + 1);
    }
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    // The starting point's own evaluation counts against the budget.
    while evals + 1 < budget {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = (1..3)
            .map(|j| (s[j].0[0] - s[0].0[0]).abs().max((s[j].0[1] - s[0].0[1]).abs()))
            .fold(0.0, f64::max);
        if size < xtol {
            break;
        }
        let c = [(s[0].0[0] + s[1].0[0]) / 2.0, (s[0].0[1] + s[1].0[1]) / 2.0];
        let worst = s[2];
        let xr = lerp(c, worst.0, -1.0);
        let fr = call(xr, &mut evals);
        if fr < s[0].1 {
            if evals + 1 >= budget {
                s[2] = (xr, fr);
                break;
            }
            let xe = lerp(c, worst.0, -2.0);
            let fe = call(xe, &mut evals);
            s[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < s[1].1 {
            s[2] = (xr, fr);
        } else {
            if evals + 1 >= budget {
                break;
            }
            let (xc, fc) = if fr < worst.1 {
                let x = lerp(c, worst.0, -0.5);
                (x, call(x, &mut evals))
            } else {
                let x = lerp(c, worst.0, 0.5);
                (x, call(x, &mut evals))
            };
            if fc < worst.1.min(fr) {
                s[2] = (xc, fc);
            } else {
                for j in 1..3 {
                    if evals + 1 >= budget {
                        break;
                    }
                    let x = lerp(s[0].0, s[j].0, 0.5);
                    let fx = call(x, &mut evals);
                    s[j] = (x, fx);
                }
            }
        }
    }
    let best = s.iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty");
    (best.0, best.1, evals + 1)
}

/// Leakage below this level is treated as already cancelled.
const CANCELLED_DBM: f64 = -200.0;

pub fn calibrate(imp: &MixerImpairments, sb_hz: f64, targets: LeakageTargets) -> Result<Calibration, MixerError> {
    calibrate_from(imp, sb_hz, targets, MixerCorrection::IDENTITY)
}

/// Offsets are searched on LO leakage, then `(m12, m22)` on image leakage.
/// The LO frequency is `imp.lo_hz`.
pub fn calibrate_from(
    imp: &MixerImpairments,
    sb_hz: f64,
    targets: LeakageTargets,
    start: MixerCorrection,
) -> Result<Calibration, MixerError> {
    let bench = Bench::new(imp, sb_hz)?;
    let before = bench.eval(&start);
    let mut corr = start;

    let evals_lo = if before.p_lo_dbm <= CANCELLED_DBM {
        1
    } else {
        let f = |x: [f64; 2]| {
            bench
                .eval(&MixerCorrection {
                    offset_i: x[0],
                    offset_q: x[1],
                    ..corr
                })
                .p_lo_dbm
        };
        let (x, _, n) = nelder_mead2(
            f,
            [corr.offset_i, corr.offset_q],
            before.p_lo_dbm,
            [2e-3, 2e-3],
            STAGE_BUDGET,
            1e-10,
        );
        corr.offset_i = x[0];
        corr.offset_q = x[1];
        n
    };

    let mid = bench.eval(&corr);
    let evals_img = if mid.p_image_dbm <= CANCELLED_DBM {
        1
    } else {
        let f = |x: [f64; 2]| {
            bench
                .eval(&MixerCorrection {
                    m12: x[0],
                    m22: x[1],
                    ..corr
                })
                .p_image_dbm
        };
        let (x, _, n) = nelder_mead2(
            f,
            [corr.m12, corr.m22],
            mid.p_image_dbm,
            [0.02, 0.02],
            STAGE_BUDGET,
            1e-10,
        );
        corr.m12 = x[0];
        corr.m22 = x[1];
        n
    };

    // Replay through the public signal path rather than the search shortcut.
    let (i_bb, q_bb) = sideband_tone(bench.n, sb_hz, RF_SAMPLE_RATE_HZ, CAL_TONE_V);
    let rf = upconvert(&i_bb, &q_bb, imp, &corr, RF_SAMPLE_RATE_HZ, 0)?;
    let after = measure_leakage(&rf, imp.lo_hz, sb_hz, RF_SAMPLE_RATE_HZ)?;
    let cal = Calibration {
        correction: corr,
        before,
        after,
        evaluations: [evals_lo, evals_img],
    };
    if after.p_lo_dbm <= targets.lo_dbm && after.p_image_dbm <= targets.image_dbm {
        Ok(cal)
    } else {
        Err(MixerError::DidNotConverge { best: Box::new(cal) })
    }
}

/// Leakage of the calibration test tone through `imp` with `corr` applied.
pub fn leakage_of(imp: &MixerImpairments, corr: &MixerCorrection, sb_hz: f64) -> Result<LeakageReport, MixerError> {
    let fs = RF_SAMPLE_RATE_HZ;
    let n = coherent_length(&[imp.lo_hz, sb_hz], fs, (100.0 * fs / sb_hz).ceil() as usize)
        .ok_or(MixerError::BinMisaligned { freq_hz: imp.lo_hz })?;
    let (i_bb, q_bb) = sideband_tone(n, sb_hz, fs, CAL_TONE_V);
    let rf = upconvert(&i_bb, &q_bb, imp, corr, fs, 0)?;
    measure_leakage(&rf, imp.lo_hz, sb_hz, fs)
}
