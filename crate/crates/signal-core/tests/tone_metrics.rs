// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use m2cs_signal::{analyze_tone, periodogram, sine, window, AnalyzeOptions, WindowKind};
use proptest::prelude::*;

/// O(n^2) one-sided periodogram, rect window, same normalization.
fn naive_periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * j) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            let p = (re * re + im * im) / (n * n) as f64;
            if k == 0 || k == n / 2 {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

fn tones(n: usize, fs: f64, parts: &[(f64, f64)]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for &(cycles, amp) in parts {
        for (v, s) in x.iter_mut().zip(sine(n, fs, cycles * fs / n as f64, amp, 0.7)) {
            *v += s;
        }
    }
    x
}

#[test]
fn hann_eight_matches_closed_form() {
    let w = window(WindowKind::Hann, 8);
    for (k, v) in w.iter().enumerate() {
        assert!((v - 0.5 * (1.0 - (2.0 * PI * k as f64 / 7.0).cos())).abs() < 1e-15);
    }
    assert_eq!(window(WindowKind::Rect, 4), vec![1.0; 4]);
    assert_eq!(window(WindowKind::Hann, 3), vec![0.0, 1.0, 0.0]);
}

#[test]
fn harmonic_levels_give_known_thd_and_sfdr() {
    let fs = 1e9;
    let n = 4096;
    // -60 dBc second and -70 dBc third harmonic; the 5th aliases to
    // bin n - 5*301 = 2591 -> folds to 1505 and sits at -80 dBc.
    let x = tones(
        n,
        fs,
        &[(301.0, 1.0), (602.0, 1e-3), (903.0, 10f64.powf(-3.5)), (1505.0, 1e-4)],
    );
    let opts = AnalyzeOptions {
        window: WindowKind::Rect,
        full_scale: 1.0,
        harmonics: 5,
    };
    let r = analyze_tone(&x, fs, 301.0 * fs / n as f64, &opts).unwrap();
    let thd = 10.0 * (1e-6 + 1e-7 + 1e-8f64).log10();
    assert!((r.thd_dbc - thd).abs() < 1e-6, "thd {}", r.thd_dbc);
    assert!((r.sfdr_dbc + 60.0).abs() < 1e-6, "sfdr {}", r.sfdr_dbc);
    assert!(r.fundamental_dbfs.abs() < 1e-9);
}

#[test]
fn aliased_harmonic_is_folded() {
    let fs = 1e9;
    let n = 4096;
    // 4 * 1501 = 6004 -> 6004 - 4096 = 1908, inside the first zone.
    let x = tones(n, fs, &[(1501.0, 1.0), (1908.0, 1e-3)]);
    let opts = AnalyzeOptions {
        window: WindowKind::Rect,
        full_scale: 1.0,
        harmonics: 5,
    };
    let r = analyze_tone(&x, fs, 1501.0 * fs / n as f64, &opts).unwrap();
    assert!((r.thd_dbc + 60.0).abs() < 1e-6, "thd {}", r.thd_dbc);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fft_periodogram_matches_direct_sum(x in proptest::collection::vec(-1.0f64..1.0, 64..=64)) {
        let fast = periodogram(&x, WindowKind::Rect);
        let slow = naive_periodogram(&x);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn enob_tracks_snr(cycles in 11u32..200, amp in 0.2f64..1.0, noise_db in -80.0f64..-30.0) {
        let fs = 1e9;
        let n = 4096;
        let noise_amp = 10f64.powf(noise_db / 20.0);
        // Wideband deterministic "noise" of known power from many small tones.
        let mut parts = vec![(2.0 * (cycles / 2) as f64 + 1.0, amp)];
        parts.extend((0..40).map(|k| (1003.0 + 17.0 * k as f64, noise_amp)));
        let x = tones(n, fs, &parts);
        let opts = AnalyzeOptions { window: WindowKind::Rect, full_scale: 1.0, harmonics: 0 };
        let r = analyze_tone(&x, fs, parts[0].0 * fs / n as f64, &opts).unwrap();
        prop_assert!((r.enob - (r.snr_dbc - 1.76) / 6.02).abs() < 1e-12);
        prop_assert!(r.sfdr_dbc <= 0.0);
    }
}
