// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Measurement-conditioned branching, driven entirely over the protocol.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use m2cs_awg::{PlaylistEntry, HALT};
use m2cs_backplane::chassis::{layout, standard, Chassis};
use m2cs_backplane::{TriggerInstruction, TriggerType};
use m2cs_daq::{DemodChannelConfig, Threshold};
use m2cs_protocol::payload::{SetDemod, WriteTrigTable};
use m2cs_protocol::{Client, InProcess};
use m2cs_qubit::QubitParams;
use m2cs_signal::{WindowKind, DAC_LSB_V};
use m2cs_timebase::SimTime;

const PROBE: u8 = layout::READOUT_AWG;
const BRANCH: u8 = layout::BRANCH_AWG;
const DAQ: u8 = layout::READOUT_DAQ;
const SCOPE: u8 = layout::SCOPE_DAQ;

fn volts(v: f64) -> i16 {
    (v / DAC_LSB_V).round() as i16
}

/// 100 ns probe at LO + 50 MHz. The up-converter emits `I·cos + Q·sin`, so
/// the upper sideband needs Q = -sin.
fn probe(phase: f64) -> (Vec<i16>, Vec<i16>) {
    (0..200)
        .map(|k| {
            let x = 2.0 * PI * 50e6 * k as f64 * 0.5e-9 + phase;
            (volts(0.3 * x.cos()), volts(-0.3 * x.sin()))
        })
        .unzip()
}

fn table(target: u8, instrs: &[(TriggerType, u32)], fb: Option<(u8, u8)>) -> WriteTrigTable {
    WriteTrigTable {
        target_slot: target,
        append: false,
        feedback: fb,
        instructions: instrs
            .iter()
            .map(|&(t, k)| TriggerInstruction::new(t, k).raw())
            .collect(),
    }
}

fn setup() -> (Arc<Mutex<Chassis>>, Client<InProcess<Chassis>>) {
    let hw = Arc::new(Mutex::new(standard(1, 11, QubitParams::reference())));
    let mut c = Client::new(InProcess::new(hw.clone()), 1, 1);
    let saw: Vec<i16> = (0..200).map(|k| volts(0.2 + 0.2 * k as f64 / 200.0)).collect();
    c.write_wave(BRANCH, 0, 1, &saw).unwrap();
    c.write_wave(BRANCH, 0, 2, &[volts(0.3); 200]).unwrap();
    c.write_playlist(
        BRANCH,
        &[
            PlaylistEntry::wait(1, 2),
            PlaylistEntry::play(1, HALT),
            PlaylistEntry::play(2, HALT),
        ],
    )
    .unwrap();
    c.write_playlist(PROBE, &[PlaylistEntry::play(1, HALT)]).unwrap();
    let demod = |channel, length_ns, input| DemodChannelConfig {
        channel,
        freq_hz: 50e6,
        phase_millideg: 0,
        window: WindowKind::Rect,
        length_ns,
        input,
    };
    c.set_demod(DAQ, SetDemod::enable(demod(0, 100, 1))).unwrap();
    c.set_demod(SCOPE, SetDemod::enable(demod(0, 400, 0))).unwrap();
    c.write_trig_table(&table(PROBE, &[(TriggerType::Start, 0)], None))
        .unwrap();
    c.write_trig_table(&table(DAQ, &[(TriggerType::Start, 18)], None))
        .unwrap();
    c.write_trig_table(&table(SCOPE, &[(TriggerType::Start, 70)], None))
        .unwrap();
    c.write_trig_table(&table(
        BRANCH,
        &[(TriggerType::Start, 0), (TriggerType::Feedback, 70)],
        Some((DAQ, 0)),
    ))
    .unwrap();
    (hw, c)
}

fn shot(c: &mut Client<InProcess<Chassis>>, phase: f64) -> (i64, i64, u8) {
    let (i, q) = probe(phase);
    c.write_wave(PROBE, 0, 1, &i).unwrap();
    c.write_wave(PROBE, 1, 1, &q).unwrap();
    c.start(1, 2000).unwrap();
    let r = c.read_demod(DAQ, 0, 1).unwrap()[0];
    (r.i_acc, r.q_acc, r.state_bit)
}

#[test]
fn branch_starts_180_ns_after_readout_end_and_follows_the_phase() {
    let (hw, mut c) = setup();
    let (i0, q0, _) = shot(&mut c, 0.0);
    let (i1, q1, _) = shot(&mut c, PI);
    assert!((i0 - i1).abs() > 1 << 20, "phases not separated: {i0} {q0} {i1} {q1}");
    let th = Threshold::bisector((i0 as f64, q0 as f64), (i1 as f64, q1 as f64));
    c.set_threshold(DAQ, 0, th).unwrap();

    for k in 0..6 {
        let flip = k % 3 == 1;
        let (_, _, bit) = shot(&mut c, if flip { PI } else { 0.0 });
        assert_eq!(bit, flip as u8);
        let hw = hw.lock().unwrap();
        let probe_end = hw.bay().awg(PROBE).unwrap().spans()[0].end;
        let spans = hw.bay().awg(BRANCH).unwrap().spans();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].segment_id, 1 + bit as u16);
        assert_eq!(probe_end - hw.backplane().epoch(), SimTime::from_ns(214));
        assert_eq!(spans[0].start - probe_end, SimTime::from_ns(180));
    }

    // The scope window opens at 322 ns, so the branch waveform starts at
    // raw index 72.
    let raw: Vec<i8> = c
        .read_raw_range(SCOPE, 0, 0, 400)
        .unwrap()
        .into_iter()
        .map(|p| p.0)
        .collect();
    let top = raw[90..160].iter().map(|&x| x as f64).sum::<f64>() / 70.0;
    let cross = raw.iter().position(|&x| x as f64 > top / 2.0).unwrap();
    assert!((71..=74).contains(&cross), "50% crossing at index {cross}");
    assert_eq!(hw.lock().unwrap().feedback_errors(), 0);
}
