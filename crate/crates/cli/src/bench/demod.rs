// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Digital demodulation benchmarks on the scope DAQ: frequency selectivity
//! of a single channel and simultaneous demodulation of a tone comb.

use m2cs_awg::{PlaylistEntry, HALT};
use m2cs_backplane::chassis::{layout, standard};
use m2cs_backplane::dut::InputRoute;
use m2cs_backplane::TriggerType;
use m2cs_daq::{DemodChannelConfig, IQResult, DEMOD_CHANNELS};
use m2cs_mixer::RfTone;
use m2cs_protocol::payload::SetDemod;
use m2cs_qubit::QubitParams;
use m2cs_signal::WindowKind;

use super::{period_ns, table, Benchmark, Ctx};
use crate::config::Key;
use crate::error::{experiment, CliError};
use crate::report::{Check, Report, Table};
use crate::session::Session;

const DAQ: u8 = layout::SCOPE_DAQ;
const INPUT: u8 = 1;

pub const SWEEP: Benchmark = Benchmark {
    name: "demod-sweep",
    about: "single-tone response of the demodulator swept across the IF band",
    schema: &[
        Key::positive("tone-mhz", "50", 400.0, "IF of the input tone"),
        Key::positive("amplitude-v", "0.3", 0.5, "tone amplitude at the ADC"),
        Key::int("length-ns", "1000", 16, 8000, "demodulation window"),
        Key::positive("start-mhz", "1", 500.0, "first demodulation frequency"),
        Key::positive("stop-mhz", "150", 500.0, "last demodulation frequency"),
        Key::positive("step-mhz", "1", 100.0, "sweep step"),
        Key::choice("window", "rect", &["rect", "hann"], "demodulation window shape"),
    ],
    remote: false,
    run: run_sweep,
};

pub const MULTIPLEX: Benchmark = Benchmark {
    name: "multiplex",
    about: "six-tone comb demodulated on parallel channels, against each tone alone and over demodulation phase",
    schema: &[
        Key::positive("first-mhz", "30", 400.0, "lowest tone"),
        Key::positive("spacing-mhz", "30", 100.0, "tone spacing"),
        Key::int("tones", "6", 1, 6, "number of tones"),
        Key::positive("amplitude-v", "0.06", 0.5, "amplitude of each tone"),
        Key::int("length-ns", "1000", 16, 8000, "demodulation window"),
        Key::int("shots", "10", 1, 1000, "shots averaged per point"),
        Key::int("phase-step-deg", "30", 1, 180, "demodulation phase step"),
    ],
    remote: false,
    run: run_multiplex,
};

fn tone(if_hz: f64, amplitude_v: f64) -> RfTone {
    RfTone {
        freq_hz: layout::READOUT_LO_HZ + if_hz,
        amplitude_v,
        phase_rad: 0.0,
    }
}

fn open(ctx: &Ctx, name: &'static str) -> Result<Session, CliError> {
    let mut s = ctx.session(name, |id, seed| standard(id, seed, QubitParams::reference()))?;
    s.client
        .write_trig_table(&table(DAQ, &[(TriggerType::Start, 0)], None))?;
    s.client
        .write_playlist(layout::BRANCH_AWG, &[PlaylistEntry::play(1, HALT)])?;
    Ok(s)
}

/// Enables exactly `cfgs`, feeds `tones`, and returns the per-channel mean
/// (I, Q) over `shots`.
fn measure(
    s: &mut Session,
    tones: &[RfTone],
    cfgs: &[DemodChannelConfig],
    shots: u32,
) -> Result<Vec<(f64, f64)>, CliError> {
    s.hw()?.dut_mut().route(
        DAQ,
        INPUT,
        InputRoute::Tones {
            tones: tones.to_vec(),
            noise_rms_v: 0.0,
        },
    );
    for ch in 0..DEMOD_CHANNELS as u8 {
        s.client.set_demod(DAQ, SetDemod::disable(ch))?;
    }
    for c in cfgs {
        s.client.set_demod(DAQ, SetDemod::enable(*c))?;
    }
    let len = cfgs.iter().map(|c| c.length_ns).max().unwrap_or(0);
    s.client.start(shots, period_ns(len as u64))?;
    let results = s.client.read_demod_all(DAQ)?;
    if results.len() != cfgs.len() * shots as usize {
        return Err(experiment(format!(
            "expected {} results, read {}",
            cfgs.len() * shots as usize,
            results.len()
        )));
    }
    Ok(cfgs.iter().map(|c| mean_iq(&results, c.channel)).collect())
}

fn mean_iq(results: &[IQResult], channel: u8) -> (f64, f64) {
    let mine: Vec<&IQResult> = results.iter().filter(|r| r.channel == channel).collect();
    let n = mine.len().max(1) as f64;
    (
        mine.iter().map(|r| r.i_acc as f64).sum::<f64>() / n,
        mine.iter().map(|r| r.q_acc as f64).sum::<f64>() / n,
    )
}

fn db(ratio: f64) -> f64 {
    20.0 * ratio.max(1e-300).log10()
}

fn run_sweep(ctx: &Ctx) -> Result<Report, CliError> {
    let c = &ctx.cfg;
    let (f0, f1, df) = (c.f64("start-mhz"), c.f64("stop-mhz"), c.f64("step-mhz"));
    c.check(f1 >= f0, "stop-mhz", "must not be below start-mhz")?;
    let tone_mhz = c.f64("tone-mhz");
    let window = if c.str("window") == "hann" {
        WindowKind::Hann
    } else {
        WindowKind::Rect
    };
    let length_ns = c.u32("length-ns");
    let steps = ((f1 - f0) / df + 1e-9).floor() as usize + 1;
    let freqs: Vec<f64> = (0..steps).map(|k| f0 + k as f64 * df).collect();

    let mut s = open(ctx, "demod-sweep")?;
    let tones = [tone(tone_mhz * 1e6, c.f64("amplitude-v"))];
    let mut mags = Vec::with_capacity(freqs.len());
    for chunk in freqs.chunks(DEMOD_CHANNELS) {
        let cfgs: Vec<DemodChannelConfig> = chunk
            .iter()
            .enumerate()
            .map(|(k, f)| DemodChannelConfig {
                channel: k as u8,
                freq_hz: f * 1e6,
                phase_millideg: 0,
                window,
                length_ns,
                input: INPUT,
            })
            .collect();
        for (i, q) in measure(&mut s, &tones, &cfgs, 1)? {
            mags.push(i.hypot(q));
        }
    }

    let matched = freqs.iter().position(|f| (f - tone_mhz).abs() < 1e-9);
    let matched = matched.ok_or_else(|| experiment("the tone frequency is not on the sweep grid"))?;
    let peak = mags[matched];
    let worst = mags
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != matched)
        .map(|(_, m)| *m)
        .fold(0.0, f64::max);
    let selectivity = db(peak / worst);

    let mut rep = ctx.report("demod-sweep");
    rep.fit("matched_magnitude", peak)
        .fit("largest_other_magnitude", worst)
        .fit("selectivity_db", selectivity);
    rep.check(Check::at_least("selectivity_db", selectivity, 30.0));
    let mut t = Table::new(&["demod_mhz", "magnitude", "relative_db"]);
    for (f, m) in freqs.iter().zip(&mags) {
        t.push(vec![*f, *m, db(m / peak)]);
    }
    rep.set_table(t);
    Ok(rep)
}

fn run_multiplex(ctx: &Ctx) -> Result<Report, CliError> {
    let c = &ctx.cfg;
    let n = c.usize("tones");
    let ifs: Vec<f64> = (0..n)
        .map(|k| (c.f64("first-mhz") + k as f64 * c.f64("spacing-mhz")) * 1e6)
        .collect();
    c.check(
        ifs.iter().all(|f| *f < 500e6),
        "spacing-mhz",
        "the comb must stay below 500 MHz",
    )?;
    let amp = c.f64("amplitude-v");
    c.check(
        amp * n as f64 <= 0.5,
        "amplitude-v",
        "the summed comb must fit the ADC range",
    )?;
    let length_ns = c.u32("length-ns");
    let shots = c.u32("shots");
    let step = c.u32("phase-step-deg");
    let cfg = |channel: u8, f: f64, deg: u32| DemodChannelConfig {
        channel,
        freq_hz: f,
        phase_millideg: (deg * 1000) as i32,
        window: WindowKind::Rect,
        length_ns,
        input: INPUT,
    };
    let comb: Vec<RfTone> = ifs.iter().map(|f| tone(*f, amp)).collect();

    let mut s = open(ctx, "multiplex")?;
    let all: Vec<DemodChannelConfig> = ifs.iter().enumerate().map(|(k, f)| cfg(k as u8, *f, 0)).collect();
    let together: Vec<f64> = measure(&mut s, &comb, &all, shots)?
        .iter()
        .map(|(i, q)| i.hypot(*q))
        .collect();
    let mut solo = Vec::with_capacity(n);
    for (k, t) in comb.iter().enumerate() {
        let (i, q) = measure(&mut s, &[*t], &all[k..=k], shots)?[0];
        solo.push(i.hypot(q));
    }
    let worst_ratio = together
        .iter()
        .zip(&solo)
        .map(|(a, b)| (a / b - 1.0).abs())
        .fold(0.0, f64::max);

    // Two phases per run fill twelve channels with six tones.
    let phases: Vec<u32> = (0..360).step_by(step as usize).collect();
    let mut points: Vec<Vec<(u32, f64, f64)>> = vec![Vec::new(); n];
    let per_run = (DEMOD_CHANNELS / n).max(1);
    for group in phases.chunks(per_run) {
        let cfgs: Vec<DemodChannelConfig> = group
            .iter()
            .enumerate()
            .flat_map(|(g, deg)| ifs.iter().enumerate().map(move |(k, f)| ((g * n + k) as u8, *f, *deg)))
            .map(|(ch, f, deg)| cfg(ch, f, deg))
            .collect();
        for (r, c) in measure(&mut s, &comb, &cfgs, shots)?.into_iter().zip(&cfgs) {
            let tone_idx = c.channel as usize % n;
            points[tone_idx].push(((c.phase_millideg / 1000) as u32, r.0, r.1));
        }
    }
    let mut worst_spread = 0.0f64;
    for p in &points {
        let radii: Vec<f64> = p.iter().map(|(_, i, q)| i.hypot(*q)).collect();
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        let (lo, hi) = radii
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), r| (lo.min(*r), hi.max(*r)));
        worst_spread = worst_spread.max((hi - lo) / mean);
    }

    let mut rep = ctx.report("multiplex");
    for (k, f) in ifs.iter().enumerate() {
        rep.fit(&format!("ratio_{}mhz", f / 1e6), together[k] / solo[k]);
    }
    rep.fit("worst_amplitude_error", worst_ratio)
        .fit("worst_radius_spread", worst_spread);
    rep.check(Check::at_most("worst_amplitude_error", worst_ratio, 0.01))
        .check(Check::at_most("worst_radius_spread", worst_spread, 0.005));
    let mut t = Table::new(&[
        "tone_mhz",
        "phase_deg",
        "i",
        "q",
        "solo_magnitude",
        "composite_magnitude",
    ]);
    for (k, p) in points.iter().enumerate() {
        for (deg, i, q) in p {
            t.push(vec![ifs[k] / 1e6, *deg as f64, *i, *q, solo[k], together[k]]);
        }
    }
    rep.set_table(t);
    Ok(rep)
}
