// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Measurement-conditioned branching.
//!
//! The readout AWG plays a 100 ns probe at phase 0 or 180°, the readout DAQ
//! discriminates it, and the backplane's FEEDBACK instruction sends the
//! branch AWG into a saw (bit 0) or a square (bit 1). The scope DAQ records
//! the branch output so the waveform can be classified from samples alone.

use std::f64::consts::PI;

use m2cs_awg::{PlaylistEntry, HALT};
use m2cs_backplane::chassis::{layout, standard};
use m2cs_backplane::{TriggerType, BACKPLANE_LATENCY_NS, CABLE_NS, CODE_BRANCH0, CODE_BRANCH1};
use m2cs_daq::{DemodChannelConfig, Threshold};
use m2cs_protocol::payload::SetDemod;
use m2cs_qubit::QubitParams;
use m2cs_signal::{mix_seed, WindowKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dac, table, Benchmark, Ctx};
use crate::config::Key;
use crate::error::{experiment, CliError};
use crate::report::{Check, Report, Table};
use crate::session::Session;

const PROBE: u8 = layout::READOUT_AWG;
const BRANCH: u8 = layout::BRANCH_AWG;
const DAQ: u8 = layout::READOUT_DAQ;
const SCOPE: u8 = layout::SCOPE_DAQ;

const PROBE_SAMPLES: usize = 200;
const PROBE_V: f64 = 0.3;
const IF_HZ: f64 = 50e6;
const PERIOD_NS: u32 = 2000;

/// Backplane ticks of each START and of the FEEDBACK instruction.
const DAQ_TICK: u32 = 18;
const FEEDBACK_TICK: u32 = 70;
const SCOPE_TICK: u32 = 70;
const SCOPE_NS: u32 = 400;

/// Trigger delivery after an instruction executes: backplane plus cable.
const DELIVERY_NS: u64 = BACKPLANE_LATENCY_NS + CABLE_NS;

/// Probe end and scope window start relative to the run epoch, from the
/// schedule above and the 72 ns AWG latency.
const PROBE_END_NS: f64 = DELIVERY_NS as f64 + 72.0 + PROBE_SAMPLES as f64 / 2.0;
const SCOPE_OPEN_NS: f64 = 4.0 * SCOPE_TICK as f64 + DELIVERY_NS as f64;

pub const FEEDBACK: Benchmark = Benchmark {
    name: "feedback",
    about: "latency and correctness of readout-conditioned branching",
    schema: &[Key::int("shots", "1000", 1, 100_000, "branch decisions checked")],
    remote: true,
    run,
};

/// Probe at LO + IF. The up-converter emits `I·cos + Q·sin`, so the upper
/// sideband needs Q = -sin.
fn probe(phase: f64) -> (Vec<i16>, Vec<i16>) {
    (0..PROBE_SAMPLES)
        .map(|k| {
            let x = 2.0 * PI * IF_HZ * k as f64 * 0.5e-9 + phase;
            (dac(PROBE_V * x.cos()), dac(-PROBE_V * x.sin()))
        })
        .unzip()
}

fn setup(s: &mut Session) -> Result<(), CliError> {
    let c = &mut s.client;
    let saw: Vec<i16> = (0..200).map(|k| dac(0.2 + 0.2 * k as f64 / 200.0)).collect();
    c.write_wave(BRANCH, 0, 1, &saw)?;
    c.write_wave(BRANCH, 0, 2, &[dac(0.3); 200])?;
    c.write_playlist(
        BRANCH,
        &[
            PlaylistEntry::wait(1, 2),
            PlaylistEntry::play(1, HALT),
            PlaylistEntry::play(2, HALT),
        ],
    )?;
    for (seg, phase) in [(1, 0.0), (2, PI)] {
        let (i, q) = probe(phase);
        c.write_wave(PROBE, 0, seg, &i)?;
        c.write_wave(PROBE, 1, seg, &q)?;
    }
    let demod = |length_ns, input| DemodChannelConfig {
        channel: 0,
        freq_hz: IF_HZ,
        phase_millideg: 0,
        window: WindowKind::Rect,
        length_ns,
        input,
    };
    c.set_demod(DAQ, SetDemod::enable(demod(100, 1)))?;
    c.set_demod(SCOPE, SetDemod::enable(demod(SCOPE_NS, 0)))?;
    c.write_trig_table(&table(PROBE, &[(TriggerType::Start, 0)], None))?;
    c.write_trig_table(&table(DAQ, &[(TriggerType::Start, DAQ_TICK)], None))?;
    c.write_trig_table(&table(SCOPE, &[(TriggerType::Start, SCOPE_TICK)], None))?;
    c.write_trig_table(&table(
        BRANCH,
        &[(TriggerType::Start, 0), (TriggerType::Feedback, FEEDBACK_TICK)],
        Some((DAQ, 0)),
    ))?;
    Ok(())
}

struct Shot {
    i: i64,
    q: i64,
    bit: u8,
    scope: Vec<f64>,
}

fn shot(s: &mut Session, phase_pi: bool) -> Result<Shot, CliError> {
    s.client
        .write_playlist(PROBE, &[PlaylistEntry::play(1 + phase_pi as u16, HALT)])?;
    s.client.start(1, PERIOD_NS)?;
    let r = *s
        .client
        .read_demod(DAQ, 0, 1)?
        .first()
        .ok_or_else(|| experiment("no readout result"))?;
    let scope = s
        .client
        .read_raw_range(SCOPE, 0, 0, SCOPE_NS)?
        .into_iter()
        .map(|p| p.0 as f64)
        .collect();
    Ok(Shot {
        i: r.i_acc,
        q: r.q_acc,
        bit: r.state_bit,
        scope,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Half the smaller of the two opening levels (0.2 V) in scope codes.
const EDGE_CODES: f64 = 0.1 * 256.0;

/// Fractional index where the record first rises through `level`.
fn crossing(scope: &[f64], level: f64) -> Option<f64> {
    let k = scope.iter().position(|&x| x > level)?;
    if k == 0 {
        return Some(0.0);
    }
    let (a, b) = (scope[k - 1], scope[k]);
    Some(k as f64 - 1.0 + (level - a) / (b - a))
}

/// Saw (rising) or square (flat) from the recorded branch output: 0 or 1.
fn classify(scope: &[f64], start: usize) -> Option<u8> {
    let early = mean(scope.get(start + 5..start + 25)?);
    let late = mean(scope.get(start + 75..start + 95)?);
    // The saw rises by about 0.15 V, some 38 codes, between the two spans.
    Some(if late - early > 19.0 { 0 } else { 1 })
}

fn run(ctx: &Ctx) -> Result<Report, CliError> {
    let shots = ctx.cfg.usize("shots");
    let mut s = ctx.session("feedback", |id, seed| standard(id, seed, QubitParams::reference()))?;
    setup(&mut s)?;
    if s.is_local() {
        s.hw()?.backplane_mut().set_recording(true);
    }

    let zero = shot(&mut s, false)?;
    let one = shot(&mut s, true)?;
    let th = Threshold::bisector((zero.i as f64, zero.q as f64), (one.i as f64, one.q as f64));
    s.client.set_threshold(DAQ, 0, th)?;

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(ctx.seed, 0x4642));
    let mut t = Table::new(&[
        "shot",
        "injected",
        "state_bit",
        "branch_seen",
        "latency_ns",
        "scope_latency_ns",
        "i",
        "q",
    ]);
    let (mut bit_errors, mut branch_errors) = (0usize, 0usize);
    let (mut lat_min, mut lat_max) = (f64::MAX, f64::MIN);
    let mut scope_sum = 0.0;
    let mut exec_lag = Vec::new();
    let mut deliver_lag = Vec::new();
    for k in 0..shots {
        let inject = rng.gen_bool(0.5);
        let r = shot(&mut s, inject)?;
        let start_idx = crossing(&r.scope, EDGE_CODES).ok_or_else(|| experiment("branch output never rose"))?;
        let seen =
            classify(&r.scope, start_idx.round() as usize).ok_or_else(|| experiment("scope record too short"))?;
        let scope_latency = SCOPE_OPEN_NS + start_idx - PROBE_END_NS;
        scope_sum += scope_latency;
        let latency = if s.is_local() {
            let hw = s.hw()?;
            let epoch = hw.backplane().epoch();
            let probe_end = hw.bay().awg(PROBE).and_then(|a| a.spans().first()).map(|sp| sp.end);
            let branch = hw.bay().awg(BRANCH).and_then(|a| a.spans().first()).copied();
            let (Some(pe), Some(br)) = (probe_end, branch) else {
                return Err(experiment("missing waveform spans"));
            };
            if br.segment_id != 1 + r.bit as u16 {
                branch_errors += 1;
            }
            if let Some(e) = hw.backplane().emissions().iter().find(|e| {
                e.slot == BRANCH && (e.code == CODE_BRANCH0 || e.code == CODE_BRANCH1) && e.executed_at >= epoch
            }) {
                exec_lag.push((e.executed_at - pe).as_ns_f64());
                deliver_lag.push((br.start - e.executed_at).as_ns_f64());
            }
            (br.start - pe).as_ns_f64()
        } else {
            scope_latency
        };
        bit_errors += (r.bit != inject as u8) as usize;
        branch_errors += (seen != inject as u8) as usize;
        lat_min = lat_min.min(latency);
        lat_max = lat_max.max(latency);
        t.push(vec![
            k as f64,
            inject as u8 as f64,
            r.bit as f64,
            seen as f64,
            latency,
            scope_latency,
            r.i as f64,
            r.q as f64,
        ]);
    }

    let mut rep = ctx.report("feedback");
    if lat_min == lat_max {
        rep.fit("latency_ns", lat_min);
    }
    rep.fit("latency_min_ns", lat_min)
        .fit("latency_max_ns", lat_max)
        .fit("scope_latency_mean_ns", scope_sum / shots as f64);
    rep.check(Check::at_most("readout_errors", bit_errors as f64, 0.0))
        .check(Check::at_most("branch_errors", branch_errors as f64, 0.0));
    if s.is_local() {
        let hw = s.hw()?;
        let awg = hw.bay().awg(BRANCH).map(|a| a.latency().total_ns).unwrap_or(0) as f64;
        let daq = hw.bay().daq(DAQ).map(|d| d.config().latency.processing_ns).unwrap_or(0) as f64;
        let wiring = 2.0 * CABLE_NS as f64;
        let bp = BACKPLANE_LATENCY_NS as f64;
        drop(hw);
        rep.fit("stage_awg_ns", awg)
            .fit("stage_backplane_ns", bp)
            .fit("stage_daq_ns", daq)
            .fit("stage_wiring_ns", wiring);
        rep.check(Check::near("latency_min_ns", lat_min, 180.0, 0.0))
            .check(Check::near("latency_max_ns", lat_max, 180.0, 0.0))
            .check(Check::near("stage_awg_ns", awg, 72.0, 0.0))
            .check(Check::near("stage_backplane_ns", bp, 24.0, 0.0))
            .check(Check::near("stage_daq_ns", daq, 48.0, 0.0))
            .check(Check::near("stage_wiring_ns", wiring, 36.0, 0.0))
            .check(Check::near("stage_sum_ns", awg + bp + daq + wiring, 180.0, 0.0));
        let spread = |v: &[f64]| v.iter().fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(*x), b.max(*x)));
        let (e0, e1) = spread(&exec_lag);
        let (d0, d1) = spread(&deliver_lag);
        rep.fit("readout_end_to_decision_ns", e1)
            .fit("decision_to_first_sample_ns", d1);
        rep.check(Check::near(
            "readout_end_to_decision_ns",
            e1,
            daq + CABLE_NS as f64,
            0.0,
        ))
        .check(Check::near(
            "readout_end_to_decision_min_ns",
            e0,
            daq + CABLE_NS as f64,
            0.0,
        ))
        .check(Check::near(
            "decision_to_first_sample_ns",
            d1,
            bp + CABLE_NS as f64 + awg,
            0.0,
        ))
        .check(Check::near(
            "decision_to_first_sample_min_ns",
            d0,
            bp + CABLE_NS as f64 + awg,
            0.0,
        ))
        .check(Check::at_most("feedback_errors", s.hw()?.feedback_errors() as f64, 0.0));
    } else {
        // The scope resolves the branch start to within a sample.
        rep.check(Check::near("latency_min_ns", lat_min, 180.0, 1.0))
            .check(Check::near("latency_max_ns", lat_max, 180.0, 1.0));
    }
    rep.set_table(t);
    Ok(rep)
}
