// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Sample formats, quantizers, windows and single-tone spectrum metrics.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

pub const DAC_BITS: u32 = 14;
pub const DAC_LSB_V: f64 = 2.0 / 16384.0;
pub const DAC_MIN: i16 = -8192;
pub const DAC_MAX: i16 = 8191;
pub const ADC_BITS: u32 = 8;
pub const ADC_DEFAULT_FS_VPP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DacCode(i16);

impl DacCode {
    pub const ZERO: DacCode = DacCode(0);

    pub fn new(code: i16) -> Option<Self> {
        (DAC_MIN..=DAC_MAX).contains(&code).then_some(DacCode(code))
    }

    /// Clamps into the 14-bit range.
    pub fn saturating(code: i32) -> Self {
        DacCode(code.clamp(DAC_MIN as i32, DAC_MAX as i32) as i16)
    }

    pub fn from_volts(v: f64) -> Self {
        DacCode(SampleFormat::Dac.quantize_one(v))
    }

    pub fn code(self) -> i16 {
        self.0
    }

    pub fn volts(self) -> f64 {
        self.0 as f64 * DAC_LSB_V
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AdcCode(pub i8);

impl AdcCode {
    pub fn from_volts(v: f64, full_scale_vpp: f64) -> Self {
        AdcCode(SampleFormat::Adc { full_scale_vpp }.quantize_one(v) as i8)
    }

    pub fn volts(self, full_scale_vpp: f64) -> f64 {
        self.0 as f64 * full_scale_vpp / 256.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleFormat {
    Dac,
    Adc { full_scale_vpp: f64 },
}

impl SampleFormat {
    pub const ADC: SampleFormat = SampleFormat::Adc {
        full_scale_vpp: ADC_DEFAULT_FS_VPP,
    };

    pub fn bits(&self) -> u32 {
        match self {
            SampleFormat::Dac => DAC_BITS,
            SampleFormat::Adc { .. } => ADC_BITS,
        }
    }

    pub fn lsb_volts(&self) -> f64 {
        match self {
            SampleFormat::Dac => DAC_LSB_V,
            SampleFormat::Adc { full_scale_vpp } => full_scale_vpp / 256.0,
        }
    }

    pub fn code_range(&self) -> (i16, i16) {
        let half = 1i32 << (self.bits() - 1);
        (-half as i16, (half - 1) as i16)
    }

    /// Amplitude of a full-scale sine, in codes. Reference for dBFS.
    pub fn full_scale_codes(&self) -> f64 {
        (1u32 << (self.bits() - 1)) as f64
    }

    /// Round to nearest (ties away from zero), then saturate.
    pub fn quantize_one(&self, v: f64) -> i16 {
        let (lo, hi) = self.code_range();
        let c = (v / self.lsb_volts()).round();
        c.clamp(lo as f64, hi as f64) as i16
    }

    pub fn volts(&self, code: i16) -> f64 {
        code as f64 * self.lsb_volts()
    }
}

pub fn quantize(samples: &[f64], format: SampleFormat) -> Vec<i16> {
    samples.iter().map(|&v| format.quantize_one(v)).collect()
}

pub fn dequantize(codes: &[i16], format: SampleFormat) -> Vec<f64> {
    codes.iter().map(|&c| format.volts(c)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WindowKind {
    #[default]
    Rect,
    Hann,
}

impl WindowKind {
    pub fn code(self) -> u8 {
        match self {
            WindowKind::Rect => 0,
            WindowKind::Hann => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(WindowKind::Rect),
            1 => Some(WindowKind::Hann),
            _ => None,
        }
    }
}

/// `hann(1)` is `[1.0]`; the closed form is 0/0 there.
pub fn window(kind: WindowKind, n: usize) -> Vec<f64> {
    match kind {
        WindowKind::Rect => vec![1.0; n],
        WindowKind::Hann if n == 1 => vec![1.0],
        WindowKind::Hann => {
            let d = (n - 1) as f64;
            (0..n)
                .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / d).cos()))
                .collect()
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("record of {len} samples is shorter than 1024")]
    TooShort { len: usize },
    #[error("record length {len} is not a power of two")]
    NotPowerOfTwo { len: usize },
    #[error("no spectral peak at the hinted fundamental {hint_hz} Hz")]
    FundamentalNotFound { hint_hz: f64 },
    #[error("fundamental hint {hint_hz} Hz is outside (0, fs/2)")]
    FundamentalOutOfBand { hint_hz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeOptions {
    pub window: WindowKind,
    /// Peak amplitude, in the same units as the input, that maps to 0 dBFS.
    pub full_scale: f64,
    /// Number of harmonics counted in THD, starting at the 2nd.
    pub harmonics: usize,
}

impl AnalyzeOptions {
    pub fn for_format(format: SampleFormat) -> Self {
        AnalyzeOptions {
            window: WindowKind::Rect,
            full_scale: format.full_scale_codes(),
            harmonics: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub bin_hz: f64,
    pub power_dbfs: Vec<f64>,
    pub fundamental_hz: f64,
    pub fundamental_dbfs: f64,
    pub sfdr_dbc: f64,
    pub snr_dbc: f64,
    pub thd_dbc: f64,
    pub enob: f64,
}

/// One-sided periodogram normalized so that the bins sum to the mean power
/// of the input (exactly for the rectangular window).
pub fn periodogram(x: &[f64], kind: WindowKind) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let w = window(kind, n);
    let s2: f64 = w.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = x.iter().zip(&w).map(|(&a, &b)| Complex64::new(a * b, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let norm = 1.0 / (n as f64 * n as f64 * s2);
    let half = n / 2;
    (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * norm;
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.max(1e-300).log10()
}

/// Windowed-periodogram tone metrics. DC and the fundamental each occupy
/// their bin ±1; harmonics 2..=harmonics+1 are folded into the first Nyquist
/// zone and also occupy ±1. Noise outside the excluded bins is scaled up to
/// the full band.
pub fn analyze_tone(
    codes: &[f64],
    fs_hz: f64,
    hint_hz: f64,
    opts: &AnalyzeOptions,
) -> Result<SpectrumReport, SignalError> {
    let n = codes.len();
    if n < 1024 {
        return Err(SignalError::TooShort { len: n });
    }
    if !n.is_power_of_two() {
        return Err(SignalError::NotPowerOfTwo { len: n });
    }
    if !(hint_hz > 0.0 && hint_hz < fs_hz / 2.0) {
        return Err(SignalError::FundamentalOutOfBand { hint_hz });
    }
    let p = periodogram(codes, opts.window);
    let half = n / 2;
    let bin_hz = fs_hz / n as f64;
    let kf = (hint_hz / bin_hz).round() as usize;
    if kf < 2 || kf >= half {
        return Err(SignalError::FundamentalOutOfBand { hint_hz });
    }
    let mean_ac: f64 = p[1..].iter().sum::<f64>() / half as f64;
    if p[kf] < p[kf - 1] || p[kf] < p[kf + 1] || p[kf] < 10.0 * mean_ac {
        return Err(SignalError::FundamentalNotFound { hint_hz });
    }

    let mut used = vec![false; half + 1];
    let mark = |k: usize, used: &mut Vec<bool>| {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(half);
        let mut sum = 0.0;
        for (j, u) in used.iter_mut().enumerate().take(hi + 1).skip(lo) {
            if !*u {
                *u = true;
                sum += p[j];
            }
        }
        sum
    };
    mark(0, &mut used);
    let p_fund = mark(kf, &mut used);
    let mut p_harm = 0.0;
    for h in 2..2 + opts.harmonics {
        let mut k = (h * kf) % n;
        if k > half {
            k = n - k;
        }
        p_harm += mark(k, &mut used);
    }

    let dc_bins = 2;
    let fund_set = kf.saturating_sub(1)..=(kf + 1);
    let spur = (dc_bins..=half)
        .filter(|k| !fund_set.contains(k))
        .map(|k| p[k])
        .fold(0.0_f64, f64::max);

    let (noise_sum, noise_bins) = (0..=half)
        .filter(|&k| !used[k])
        .fold((0.0, 0usize), |(s, c), k| (s + p[k], c + 1));
    let band_bins = (half + 1 - dc_bins) as f64;
    let noise_total = if noise_bins > 0 {
        noise_sum * band_bins / noise_bins as f64
    } else {
        0.0
    };

    let snr = to_db(p_fund / noise_total.max(1e-300));
    let fs_power = opts.full_scale * opts.full_scale / 2.0;
    Ok(SpectrumReport {
        bin_hz,
        power_dbfs: p.iter().map(|&v| to_db(v / fs_power)).collect(),
        fundamental_hz: kf as f64 * bin_hz,
        fundamental_dbfs: to_db(p_fund / fs_power),
        sfdr_dbc: to_db(spur / p_fund).min(0.0),
        snr_dbc: snr,
        thd_dbc: to_db(p_harm / p_fund),
        enob: (snr - 1.76) / 6.02,
    })
}

/// Frequency with an odd integer number of cycles in `n` samples nearest to
/// `target_hz`, so the tone is bin-centred and its harmonics do not collide.
pub fn coherent_frequency(target_hz: f64, fs_hz: f64, n: usize) -> f64 {
    let bin = fs_hz / n as f64;
    let mut cycles = (target_hz / bin).round() as i64;
    if cycles % 2 == 0 {
        cycles += 1;
    }
    cycles.max(1) as f64 * bin
}

pub fn sine(n: usize, fs_hz: f64, freq_hz: f64, amplitude: f64, phase_rad: f64) -> Vec<f64> {
    (0..n)
        .map(|k| amplitude * (2.0 * std::f64::consts::PI * freq_hz * k as f64 / fs_hz + phase_rad).sin())
        .collect()
}

/// Derives an independent stream seed from `(seed, salt)` (splitmix64 finalizer).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seekable white Gaussian noise: sample `k` of stream `seed` depends only on
/// `(seed, k)`, so any window can be regenerated independently.
pub fn gaussian_noise(seed: u64, start_index: u64, n: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(start_index as u128 * 4);
    (0..n)
        .map(|_| {
            let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
            let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dac_quantize_examples() {
        assert_eq!(quantize(&[0.0], SampleFormat::Dac), vec![0]);
        assert_eq!(quantize(&[2.0], SampleFormat::Dac), vec![8191]);
        assert_eq!(quantize(&[-5.0], SampleFormat::Dac), vec![-8192]);
        assert_eq!(
            quantize(&[0.5 * DAC_LSB_V, -0.5 * DAC_LSB_V], SampleFormat::Dac),
            vec![1, -1]
        );
        assert!((DacCode::new(8191).unwrap().volts() - 0.99987793).abs() < 1e-8);
        assert!((DacCode::new(1).unwrap().volts() - 122.0703125e-6).abs() < 1e-15);
        assert_eq!(DacCode::new(8192), None);
    }

    #[test]
    fn adc_quantize_examples() {
        let f = SampleFormat::ADC;
        assert_eq!(quantize(&[0.0, 1.0, -1.0, 1.0 / 256.0], f), vec![0, 127, -128, 1]);
        assert_eq!(AdcCode::from_volts(0.25, 1.0), AdcCode(64));
        assert_eq!(AdcCode(64).volts(2.0), 0.5);
    }

    #[test]
    fn window_examples() {
        assert_eq!(window(WindowKind::Hann, 3), vec![0.0, 1.0, 0.0]);
        assert_eq!(window(WindowKind::Rect, 4), vec![1.0; 4]);
        assert_eq!(window(WindowKind::Hann, 1), vec![1.0]);
        let w = window(WindowKind::Hann, 8);
        for (k, v) in w.iter().enumerate() {
            let expect = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / 7.0).cos());
            assert!((v - expect).abs() < 1e-15);
        }
        assert_eq!(w[0], 0.0);
        assert!(w[7].abs() < 1e-15);
    }

    fn quantized_tone(format: SampleFormat, n: usize, fs: f64, cycles: usize, amp_v: f64) -> Vec<f64> {
        let f = cycles as f64 * fs / n as f64;
        let v = sine(n, fs, f, amp_v, 0.0);
        quantize(&v, format).into_iter().map(f64::from).collect()
    }

    #[test]
    fn dac_sfdr_matches_quantization_oracle() {
        // Oracle: numpy FFT of the same quantized record, spur at bin 461.
        let codes = quantized_tone(SampleFormat::Dac, 65536, 2e9, 3277, 1.0);
        let r = analyze_tone(&codes, 2e9, 100e6, &AnalyzeOptions::for_format(SampleFormat::Dac)).unwrap();
        assert!(r.sfdr_dbc <= -95.0);
        assert!((r.sfdr_dbc - -114.092).abs() < 0.5, "sfdr {}", r.sfdr_dbc);
        assert!((r.fundamental_hz - 100.006103515625e6).abs() < 1.0);
    }

    #[test]
    fn noiseless_snr_follows_bit_formula() {
        let codes = quantized_tone(SampleFormat::ADC, 4096, 1e9, 123, 127.0 / 256.0);
        let r = analyze_tone(&codes, 1e9, 30e6, &AnalyzeOptions::for_format(SampleFormat::ADC)).unwrap();
        assert!((r.snr_dbc - 49.92).abs() < 0.5, "8-bit snr {}", r.snr_dbc);

        let codes = quantized_tone(SampleFormat::Dac, 16384, 2e9, 819, 8191.0 * DAC_LSB_V);
        let r = analyze_tone(&codes, 2e9, 100e6, &AnalyzeOptions::for_format(SampleFormat::Dac)).unwrap();
        assert!((r.snr_dbc - 86.04).abs() < 0.5, "14-bit snr {}", r.snr_dbc);
    }

    #[test]
    fn noisy_adc_tone_gives_seven_point_two_bits() {
        let n = 4096;
        let f = 123.0 * 1e9 / n as f64;
        let noise = gaussian_noise(11, 0, n, 1.5e-3);
        let v: Vec<f64> = sine(n, 1e9, f, 125.0 / 256.0, 0.3)
            .iter()
            .zip(&noise)
            .map(|(a, b)| a + b)
            .collect();
        let codes: Vec<f64> = quantize(&v, SampleFormat::ADC).into_iter().map(f64::from).collect();
        let r = analyze_tone(&codes, 1e9, 30e6, &AnalyzeOptions::for_format(SampleFormat::ADC)).unwrap();
        assert!((r.enob - 7.2).abs() <= 0.1, "enob {}", r.enob);
        assert!((r.enob - (r.snr_dbc - 1.76) / 6.02).abs() < 1e-12);
    }

    #[test]
    fn hint_between_two_tones_is_rejected() {
        let n = 4096;
        let fs = 1e9;
        let a = sine(n, fs, 101.0 * fs / n as f64, 60.0, 0.0);
        let b = sine(n, fs, 301.0 * fs / n as f64, 60.0, 0.0);
        let x: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p + q).round()).collect();
        let opts = AnalyzeOptions::for_format(SampleFormat::ADC);
        let hint = 201.0 * fs / n as f64;
        assert_eq!(
            analyze_tone(&x, fs, hint, &opts),
            Err(SignalError::FundamentalNotFound { hint_hz: hint })
        );
        assert!(analyze_tone(&x, fs, 101.0 * fs / n as f64, &opts).is_ok());
    }

    #[test]
    fn length_errors() {
        let opts = AnalyzeOptions::for_format(SampleFormat::ADC);
        assert_eq!(
            analyze_tone(&[0.0; 512], 1e9, 1e6, &opts),
            Err(SignalError::TooShort { len: 512 })
        );
        assert_eq!(
            analyze_tone(&[0.0; 1500], 1e9, 1e6, &opts),
            Err(SignalError::NotPowerOfTwo { len: 1500 })
        );
        assert_eq!(
            analyze_tone(&[0.0; 1024], 1e9, 600e6, &opts),
            Err(SignalError::FundamentalOutOfBand { hint_hz: 600e6 })
        );
    }

    #[test]
    fn hann_window_analysis_locates_tone() {
        let codes = quantized_tone(SampleFormat::ADC, 4096, 1e9, 123, 120.0 / 256.0);
        let opts = AnalyzeOptions {
            window: WindowKind::Hann,
            ..AnalyzeOptions::for_format(SampleFormat::ADC)
        };
        let r = analyze_tone(&codes, 1e9, 30e6, &opts).unwrap();
        assert!((r.fundamental_dbfs - 20.0 * (120.0f64 / 128.0).log10()).abs() < 0.05);
        assert!(r.snr_dbc > 45.0);
    }

    #[test]
    fn noise_is_seekable() {
        let all = gaussian_noise(3, 0, 100, 1.0);
        let tail = gaussian_noise(3, 40, 60, 1.0);
        assert_eq!(&all[40..], &tail[..]);
        let mean = gaussian_noise(5, 0, 100_000, 1.0).iter().sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02);
    }

    proptest! {
        #[test]
        fn quantize_roundtrip_within_half_lsb(v in -0.999f64..0.999, fs in 0.5f64..2.0) {
            for format in [SampleFormat::Dac, SampleFormat::Adc { full_scale_vpp: fs }] {
                let (lo, hi) = format.code_range();
                let lsb = format.lsb_volts();
                let v = v.clamp(lo as f64 * lsb, hi as f64 * lsb);
                let c = format.quantize_one(v);
                prop_assert!((format.volts(c) - v).abs() <= 0.5 * lsb + 1e-15);
            }
        }

        #[test]
        fn periodogram_satisfies_parseval(seed in any::<u64>(), log2n in 4u32..12) {
            let n = 1usize << log2n;
            let x = gaussian_noise(seed, 0, n, 1.0);
            let time_power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let freq_power: f64 = periodogram(&x, WindowKind::Rect).iter().sum();
            prop_assert!(((freq_power - time_power) / time_power).abs() < 1e-6);
        }
    }
}
