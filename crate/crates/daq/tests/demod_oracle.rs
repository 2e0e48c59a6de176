// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use m2cs_daq::{demodulate, DemodChannelConfig, DEMOD_CHANNELS, FACTOR_ONE};
use m2cs_signal::{AdcCode, WindowKind};
use proptest::prelude::*;

/// Float evaluation of the demodulation sums with an independently written
/// window. Returns (I, Q) in code units.
fn oracle(i: &[i8], q: &[i8], freq_hz: f64, phase_deg: f64, hann: bool) -> (f64, f64) {
    let n = i.len();
    let (mut acc_i, mut acc_q) = (0.0, 0.0);
    for k in 0..n {
        let w = if !hann || n == 1 {
            1.0
        } else {
            0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos()
        };
        let a = -2.0 * PI * freq_hz * k as f64 * 1e-9 + phase_deg.to_radians();
        let (di, dq) = (w * a.cos(), w * a.sin());
        acc_i += i[k] as f64 * di - q[k] as f64 * dq;
        acc_q += i[k] as f64 * dq + q[k] as f64 * di;
    }
    (acc_i, acc_q)
}

fn tone(n: usize, parts: &[(f64, f64, f64)]) -> (Vec<i8>, Vec<i8>) {
    (0..n)
        .map(|k| {
            let (mut x, mut y) = (0.0, 0.0);
            for &(f, amp, ph) in parts {
                let a = 2.0 * PI * f * k as f64 * 1e-9 + ph;
                x += amp * a.cos();
                y += amp * a.sin();
            }
            (
                x.round().clamp(-128.0, 127.0) as i8,
                y.round().clamp(-128.0, 127.0) as i8,
            )
        })
        .unzip()
}

fn run(i: &[i8], q: &[i8], cfg: &DemodChannelConfig) -> (f64, f64) {
    let ci: Vec<AdcCode> = i.iter().map(|&c| AdcCode(c)).collect();
    let cq: Vec<AdcCode> = q.iter().map(|&c| AdcCode(c)).collect();
    let r = demodulate(&ci, &cq, cfg).unwrap();
    (r.i_acc as f64 / FACTOR_ONE, r.q_acc as f64 / FACTOR_ONE)
}

fn cfg(channel: u8, freq_hz: f64, phase_millideg: i32, window: WindowKind, length_ns: u32) -> DemodChannelConfig {
    DemodChannelConfig {
        channel,
        freq_hz,
        phase_millideg,
        window,
        length_ns,
        input: 0,
    }
}

fn mag((a, b): (f64, f64)) -> f64 {
    a.hypot(b)
}

#[test]
fn matched_and_quadrature_examples() {
    let (i, q) = tone(1000, &[(30e6, 120.0, 0.0)]);
    let a = run(&i, &q, &cfg(0, 30e6, 0, WindowKind::Rect, 1000));
    assert!((a.1 / a.0).abs() <= 1e-3);
    assert!((a.0 / (120.0 * 1000.0) - 1.0).abs() < 2e-3);
    let b = run(&i, &q, &cfg(0, 30e6, 90_000, WindowKind::Rect, 1000));
    assert!((b.0 / b.1).abs() <= 1e-3 && b.1 > 0.0);
}

#[test]
fn grid_detuning_is_suppressed_thirty_db() {
    let n = 1000;
    let (i, q) = tone(n, &[(50e6, 100.0, 0.3)]);
    let matched = mag(run(&i, &q, &cfg(0, 50e6, 0, WindowKind::Rect, n as u32)));
    for k in 1..=150 {
        let f = k as f64 * 1e6;
        if k == 50 {
            continue;
        }
        let off = mag(run(&i, &q, &cfg(0, f, 0, WindowKind::Rect, n as u32)));
        assert!(20.0 * (matched / off).log10() >= 30.0, "{f} Hz: {off} vs {matched}");
        assert!(off <= 0.01 * matched);
    }
}

#[test]
fn six_tone_composite_matches_single_tones() {
    let n = 1000;
    let freqs = [30e6, 60e6, 90e6, 120e6, 150e6, 180e6];
    let parts: Vec<_> = freqs
        .iter()
        .enumerate()
        .map(|(k, &f)| (f, 20.0, 0.4 * k as f64))
        .collect();
    let (ci, cq) = tone(n, &parts);
    for (k, &p) in parts.iter().enumerate() {
        let (si, sq) = tone(n, &[p]);
        let c = cfg(k as u8, p.0, 0, WindowKind::Rect, n as u32);
        let solo = mag(run(&si, &sq, &c));
        let comp = mag(run(&ci, &cq, &c));
        assert!((comp / solo - 1.0).abs() <= 0.01, "tone {k}: {comp} vs {solo}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fixed_point_tracks_float_oracle_on_all_channels(
        chans in proptest::collection::vec((-250e6f64..250e6, -180_000i32..180_000, any::<bool>()), DEMOD_CHANNELS..=DEMOD_CHANNELS),
        sig_f in -250e6f64..250e6,
        sig_ph in 0.0f64..std::f64::consts::TAU,
        len in 16u32..=8000,
    ) {
        let (i, q) = tone(len as usize, &[(sig_f, 127.0, sig_ph)]);
        for (ch, &(f, ph, hann)) in chans.iter().enumerate() {
            let w = if hann { WindowKind::Hann } else { WindowKind::Rect };
            let got = run(&i, &q, &cfg(ch as u8, f, ph, w, len));
            let want = oracle(&i, &q, f, ph as f64 / 1000.0, hann);
            // Full-scale reference: the matched response of this window.
            let full = 127.0 * oracle(&vec![1; len as usize], &vec![0; len as usize], 0.0, 0.0, hann).0;
            let err = (got.0 - want.0).hypot(got.1 - want.1);
            prop_assert!(err <= full / 1024.0, "ch {ch}: err {err} full {full}");
        }
    }
}
