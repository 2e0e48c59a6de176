// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Single-qubit benchmarks on the standard bench: readout assignment
//! fidelity and the three coherence experiments.
//!
//! Schedule, in backplane ticks of 4 ns. A trigger reaches a module 42 ns
//! after its instruction executes and an AWG plays 72 ns later, so an XY
//! START at tick 0 puts the first pulse at 114 ns. A readout at tick `r`
//! starts the readout AWG at `r` and the DAQ at `r + 18`, which opens the
//! window, and thereby measures, at `4r + 114` ns.

use std::f64::consts::PI;

use m2cs_awg::{PlaylistEntry, HALT};
use m2cs_backplane::chassis::{layout, standard};
use m2cs_backplane::TriggerType;
use m2cs_daq::{DemodChannelConfig, IQResult, Threshold};
use m2cs_protocol::payload::SetDemod;
use m2cs_qubit::fit::{binomial_sigma, fit_decay, Fit, Model};
use m2cs_qubit::QubitParams;
use m2cs_signal::WindowKind;

use super::{dac, period_ns, table, Benchmark, Ctx};
use crate::config::{ConfigError, Key};
use crate::error::{experiment, CliError};
use crate::report::{Check, Report, Table};
use crate::session::Session;

const XY: u8 = layout::XY_AWG;
const RO_AWG: u8 = layout::READOUT_AWG;
const RO_DAQ: u8 = layout::READOUT_DAQ;

const READOUT_NS: u32 = 1000;
const IF_HZ: f64 = 50e6;
/// Ticks from the readout AWG's START to the DAQ's.
const DAQ_LAG_TICKS: u32 = 18;
/// First sample of a START at tick 0 or of a branch at tick 0, in ns.
const PLAY_OFFSET_NS: f64 = 114.0;
/// Every gate is 80 samples, 40 ns.
const GATE_NS: f64 = 40.0;
const GATE_SAMPLES: usize = 80;
/// Pulse codes for rotations of π and π/2.
const PI_CODE: i16 = 2048;
const HALF_PI_CODE: i16 = 1024;

// Segment ids on the XY AWG.
const SEG_X90: u16 = 1;
const SEG_X180: u16 = 2;
const SEG_Y180: u16 = 3;
const SEG_PHI90: u16 = 4;

/// Assignment fidelity of two Gaussian clouds, 1 − Φ(−SNR/2).
const FIDELITY_AT_SNR_4_82: f64 = 0.992;
const FIDELITY_AT_SNR_3_886: f64 = 0.974;
const FIDELITY_TOL: f64 = 0.003;
const COHERENCE_TOL: f64 = 0.03;

pub const READOUT_FIDELITY: Benchmark = Benchmark {
    name: "readout-fidelity",
    about: "assignment fidelity of the dispersive readout at two SNR settings",
    schema: &[
        Key::int(
            "calibration-shots",
            "2000",
            10,
            30_000,
            "shots per state for the threshold",
        ),
        Key::int("shots", "20000", 100, 60_000, "shots per state for the fidelity"),
        Key::positive("snr-high", "4.82", 100.0, "cloud separation over sigma, first setting"),
        Key::positive("snr-low", "3.886", 100.0, "cloud separation over sigma, second setting"),
    ],
    remote: false,
    run: run_readout,
};

const COHERENCE_KEYS: [Key; 3] = [
    Key::int("points", "30", 5, 500, "delays"),
    Key::int("shots", "300", 10, 60_000, "shots per delay"),
    Key::int(
        "calibration-shots",
        "500",
        10,
        30_000,
        "shots per state for the threshold",
    ),
];

pub const T1: Benchmark = Benchmark {
    name: "t1",
    about: "energy relaxation time from a π pulse and a delayed readout",
    schema: &[
        COHERENCE_KEYS[0],
        COHERENCE_KEYS[1],
        COHERENCE_KEYS[2],
        Key::positive(
            "t1-us",
            "128.7",
            2000.0,
            "T1 of the emulated qubit; with --remote, the value expected",
        ),
        Key::positive("span", "4", 20.0, "longest delay in units of T1"),
    ],
    remote: true,
    run: run_t1,
};

pub const RAMSEY: Benchmark = Benchmark {
    name: "ramsey",
    about: "free-induction decay from two π/2 pulses with a virtual detuning",
    schema: &[
        COHERENCE_KEYS[0],
        COHERENCE_KEYS[1],
        COHERENCE_KEYS[2],
        Key::positive(
            "t2-ramsey-us",
            "12.0",
            2000.0,
            "Ramsey T2 of the emulated qubit; with --remote, the value expected",
        ),
        Key::positive("span", "2", 20.0, "longest delay in units of T2"),
        Key::positive("detuning-mhz", "0.25", 50.0, "phase advance rate of the second pulse"),
    ],
    remote: true,
    run: run_ramsey,
};

pub const ECHO: Benchmark = Benchmark {
    name: "echo",
    about: "Hahn echo decay with a refocusing π pulse about y",
    schema: &[
        COHERENCE_KEYS[0],
        COHERENCE_KEYS[1],
        COHERENCE_KEYS[2],
        Key::positive(
            "t2-echo-us",
            "43.4",
            2000.0,
            "echo T2 of the emulated qubit; with --remote, the value expected",
        ),
        Key::positive("span", "4", 20.0, "longest delay in units of T2"),
    ],
    remote: true,
    run: run_echo,
};

fn pulse(code_i: i16, code_q: i16) -> (Vec<i16>, Vec<i16>) {
    (vec![code_i; GATE_SAMPLES], vec![code_q; GATE_SAMPLES])
}

fn load(s: &mut Session, seg: u16, (i, q): (Vec<i16>, Vec<i16>)) -> Result<(), CliError> {
    s.client.write_wave(XY, 0, seg, &i)?;
    s.client.write_wave(XY, 1, seg, &q)?;
    Ok(())
}

/// Readout probe, pulse library and demodulator.
fn setup(s: &mut Session) -> Result<(), CliError> {
    let amp = QubitParams::reference().readout_amplitude_v;
    let n = READOUT_NS as usize * 2;
    // Upper sideband: Q = -sin.
    let (pi, pq): (Vec<i16>, Vec<i16>) = (0..n)
        .map(|k| {
            let x = 2.0 * PI * IF_HZ * k as f64 * 0.5e-9;
            (dac(amp * x.cos()), dac(-amp * x.sin()))
        })
        .unzip();
    s.client.write_wave(RO_AWG, 0, 1, &pi)?;
    s.client.write_wave(RO_AWG, 1, 1, &pq)?;
    s.client.write_playlist(RO_AWG, &[PlaylistEntry::play(1, HALT)])?;
    load(s, SEG_X90, pulse(HALF_PI_CODE, 0))?;
    load(s, SEG_X180, pulse(PI_CODE, 0))?;
    load(s, SEG_Y180, pulse(0, PI_CODE))?;
    let cfg = DemodChannelConfig {
        channel: 0,
        freq_hz: IF_HZ,
        phase_millideg: 0,
        window: WindowKind::Rect,
        length_ns: READOUT_NS,
        input: 0,
    };
    s.client.set_demod(RO_DAQ, SetDemod::enable(cfg))?;
    Ok(())
}

/// Runs `shots` with the XY table `xy` and a readout at tick `r`.
fn acquire(s: &mut Session, xy: &[(TriggerType, u32)], r: u32, shots: u32) -> Result<Vec<IQResult>, CliError> {
    s.client.write_trig_table(&table(XY, xy, None))?;
    s.client
        .write_trig_table(&table(RO_AWG, &[(TriggerType::Start, r)], None))?;
    s.client
        .write_trig_table(&table(RO_DAQ, &[(TriggerType::Start, r + DAQ_LAG_TICKS)], None))?;
    s.client.start(
        shots,
        period_ns(4 * r as u64 + PLAY_OFFSET_NS as u64 + READOUT_NS as u64),
    )?;
    let res = s.client.read_demod_all(RO_DAQ)?;
    if res.len() != shots as usize {
        return Err(experiment(format!("expected {shots} readouts, read {}", res.len())));
    }
    Ok(res)
}

fn centroid(r: &[IQResult]) -> (f64, f64) {
    let n = r.len() as f64;
    (
        r.iter().map(|x| x.i_acc as f64).sum::<f64>() / n,
        r.iter().map(|x| x.q_acc as f64).sum::<f64>() / n,
    )
}

fn ones(r: &[IQResult]) -> f64 {
    r.iter().filter(|x| x.state_bit == 1).count() as f64 / r.len() as f64
}

/// Earliest readout tick after a π pulse at tick 0.
const FIRST_READOUT_TICK: u32 = 10;

/// Prepares |0⟩ (no pulse) and |1⟩ (π about x), installs the bisecting
/// threshold and returns both shot sets.
fn calibrate(s: &mut Session, shots: u32) -> Result<(Vec<IQResult>, Vec<IQResult>), CliError> {
    s.client.write_playlist(XY, &[PlaylistEntry::play(SEG_X180, HALT)])?;
    let zero = acquire(s, &[], FIRST_READOUT_TICK, shots)?;
    let one = acquire(s, &[(TriggerType::Start, 0)], FIRST_READOUT_TICK, shots)?;
    let th = Threshold::bisector(centroid(&zero), centroid(&one));
    s.client.set_threshold(RO_DAQ, 0, th)?;
    Ok((zero, one))
}

fn run_readout(ctx: &Ctx) -> Result<Report, CliError> {
    let c = &ctx.cfg;
    let mut s = ctx.session("readout-fidelity", |id, seed| {
        standard(id, seed, QubitParams::reference())
    })?;
    setup(&mut s)?;
    let mut rep = ctx.report("readout-fidelity");
    let mut t = Table::new(&["snr", "state", "i", "q", "bit"]);
    let settings = [
        ("high", c.f64("snr-high"), 4.82, FIDELITY_AT_SNR_4_82),
        ("low", c.f64("snr-low"), 3.886, FIDELITY_AT_SNR_3_886),
    ];
    for (label, snr, reference_snr, expected) in settings {
        let params = QubitParams {
            readout_snr: snr,
            ..QubitParams::reference()
        };
        s.hw()?.dut_mut().set_transmon(params);
        calibrate(&mut s, c.u32("calibration-shots"))?;
        let zero = acquire(&mut s, &[], FIRST_READOUT_TICK, c.u32("shots"))?;
        let one = acquire(&mut s, &[(TriggerType::Start, 0)], FIRST_READOUT_TICK, c.u32("shots"))?;
        let (e0, e1) = (ones(&zero), 1.0 - ones(&one));
        let f = 1.0 - (e0 + e1) / 2.0;
        rep.fit(&format!("p1_given_0_{label}"), e0)
            .fit(&format!("p0_given_1_{label}"), e1)
            .fit(&format!("fidelity_{label}"), f);
        if snr == reference_snr {
            rep.check(Check::near(&format!("fidelity_{label}"), f, expected, FIDELITY_TOL));
        }
        for (state, set) in [(0.0, &zero), (1.0, &one)] {
            for r in set.iter().take(500) {
                t.push(vec![snr, state, r.i_acc as f64, r.q_acc as f64, r.state_bit as f64]);
            }
        }
    }
    rep.set_table(t);
    Ok(rep)
}

/// Session on a bench whose qubit differs from the reference by `tweak`.
/// A remote chassis keeps its own qubit.
fn open(ctx: &Ctx, name: &'static str, key: &str, tweak: impl FnOnce(&mut QubitParams)) -> Result<Session, CliError> {
    let mut params = QubitParams::reference();
    tweak(&mut params);
    params.validate().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        reason: e.to_string(),
    })?;
    let mut s = ctx.session(name, |id, seed| standard(id, seed, params))?;
    setup(&mut s)?;
    calibrate(&mut s, ctx.cfg.u32("calibration-shots"))?;
    Ok(s)
}

/// Evenly spaced targets in `[lo, hi]`, mapped to integers by `to_tick`
/// and de-duplicated.
fn ticks(lo: f64, hi: f64, points: usize, to_tick: impl Fn(f64) -> u32) -> Vec<u32> {
    let mut v: Vec<u32> = (0..points)
        .map(|k| to_tick(lo + (hi - lo) * k as f64 / (points - 1).max(1) as f64))
        .collect();
    v.dedup();
    v
}

struct Sweep {
    tau_us: Vec<f64>,
    p1: Vec<f64>,
    shots: usize,
}

impl Sweep {
    fn fit(&self, model: Model) -> Result<Fit, CliError> {
        let sigma = binomial_sigma(&self.p1, self.shots);
        fit_decay(&self.tau_us, &self.p1, model, Some(&sigma)).map_err(experiment)
    }

    fn table(&self, fit: &Fit) -> Table {
        let mut t = Table::new(&["tau_us", "p1", "fit"]);
        for (x, y) in self.tau_us.iter().zip(&self.p1) {
            t.push(vec![*x, *y, fit.eval(*x)]);
        }
        t
    }
}

fn coherence_report(ctx: &Ctx, name: &str, sweep: &Sweep, fit: &Fit, key: &str, truth: f64) -> Report {
    let tau = fit.params[1];
    let mut rep = ctx.report(name);
    rep.fit(key, tau)
        .fit(&format!("{key}_stderr"), fit.stderr[1])
        .fit("amplitude", fit.params[0])
        .fit("chi2", fit.chi2);
    rep.check(Check::near(key, tau, truth, truth * COHERENCE_TOL));
    rep.set_table(sweep.table(fit));
    rep
}

fn run_t1(ctx: &Ctx) -> Result<Report, CliError> {
    let c = &ctx.cfg;
    let truth = c.f64("t1-us");
    let mut s = open(ctx, "t1", "t1-us", |p| p.t1_us = truth)?;
    // π centre at 114 + 20 ns; readout at 4r + 114, so τ = 4r − 20.
    let centre = PLAY_OFFSET_NS + GATE_NS / 2.0;
    let first = 4.0 * FIRST_READOUT_TICK as f64 + PLAY_OFFSET_NS - centre;
    let rs = ticks(first, c.f64("span") * truth * 1e3, c.usize("points"), |tau| {
        ((tau + centre - PLAY_OFFSET_NS) / 4.0).round() as u32
    });
    let shots = c.u32("shots");
    let mut sweep = Sweep {
        tau_us: Vec::new(),
        p1: Vec::new(),
        shots: shots as usize,
    };
    for r in rs {
        let res = acquire(&mut s, &[(TriggerType::Start, 0)], r, shots)?;
        sweep.tau_us.push((4.0 * r as f64 + PLAY_OFFSET_NS - centre) * 1e-3);
        sweep.p1.push(ones(&res));
    }
    let fit = sweep.fit(Model::Exp)?;
    Ok(coherence_report(ctx, "t1", &sweep, &fit, "t1_us", truth))
}

fn run_ramsey(ctx: &Ctx) -> Result<Report, CliError> {
    let c = &ctx.cfg;
    let truth = c.f64("t2-ramsey-us");
    let mut s = open(ctx, "ramsey", "t2-ramsey-us", |p| p.t2_ramsey_us = truth)?;
    s.client.write_playlist(
        XY,
        &[
            PlaylistEntry::play(SEG_X90, 1),
            PlaylistEntry::wait(2, 2),
            PlaylistEntry::play(SEG_PHI90, HALT),
        ],
    )?;
    let detuning = c.f64("detuning-mhz") * 1e6;
    // A branch at tick b ≥ 10 plays the second pulse 4b ns after the first.
    let bs = ticks(40.0, c.f64("span") * truth * 1e3, c.usize("points"), |tau| {
        ((tau / 4.0).round() as u32).max(10)
    });
    let shots = c.u32("shots");
    let mut sweep = Sweep {
        tau_us: Vec::new(),
        p1: Vec::new(),
        shots: shots as usize,
    };
    for b in bs {
        let tau_ns = 4.0 * b as f64;
        let phi = 2.0 * PI * detuning * tau_ns * 1e-9;
        let code = |x: f64| (HALF_PI_CODE as f64 * x).round() as i16;
        load(&mut s, SEG_PHI90, pulse(code(phi.cos()), code(phi.sin())))?;
        let res = acquire(
            &mut s,
            &[(TriggerType::Start, 0), (TriggerType::Branch, b)],
            b + FIRST_READOUT_TICK,
            shots,
        )?;
        sweep.tau_us.push(tau_ns * 1e-3);
        sweep.p1.push(ones(&res));
    }
    let fit = sweep.fit(Model::DampedCosine)?;
    let mut rep = coherence_report(ctx, "ramsey", &sweep, &fit, "t2_ramsey_us", truth);
    rep.fit("detuning_mhz", fit.params[2].abs() / (2.0 * PI));
    Ok(rep)
}

fn run_echo(ctx: &Ctx) -> Result<Report, CliError> {
    let c = &ctx.cfg;
    let truth = c.f64("t2-echo-us");
    let mut s = open(ctx, "echo", "t2-echo-us", |p| p.t2_echo_us = truth)?;
    s.client.write_playlist(
        XY,
        &[
            PlaylistEntry::play(SEG_X90, 1),
            PlaylistEntry::wait(2, 2),
            PlaylistEntry::play(SEG_Y180, 3),
            PlaylistEntry::wait(4, 4),
            PlaylistEntry::play(SEG_X90, HALT),
        ],
    )?;
    // The last π/2 is centred 4·b2 ns after the first; the π pulse,
    // started at tick b1 = (b2 − 10)/2, sits exactly halfway. b2 is even
    // and at least 30 so the π pulse follows the first π/2.
    let b2s = ticks(240.0, c.f64("span") * truth * 1e3, c.usize("points"), |tau| {
        (((tau / 8.0).round() as u32) * 2).max(30)
    });
    let shots = c.u32("shots");
    let mut sweep = Sweep {
        tau_us: Vec::new(),
        p1: Vec::new(),
        shots: shots as usize,
    };
    for b2 in b2s {
        let b1 = (b2 - 10) / 2;
        let xy = [
            (TriggerType::Start, 0),
            (TriggerType::Branch, b1),
            (TriggerType::Branch, b2),
        ];
        let res = acquire(&mut s, &xy, b2 + FIRST_READOUT_TICK, shots)?;
        sweep.tau_us.push(4.0 * b2 as f64 * 1e-3);
        sweep.p1.push(ones(&res));
    }
    let fit = sweep.fit(Model::Exp)?;
    Ok(coherence_report(ctx, "echo", &sweep, &fit, "t2_echo_us", truth))
}
