// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use m2cs_backplane::{
    Backplane, ChassisTopology, FeedbackSource, ModuleKind, TriggerInstruction, TriggerTable, TriggerType,
    CODE_BRANCH0, CODE_BRANCH1, CODE_START,
};
use m2cs_daq::FeedbackBits;
use m2cs_timebase::{BlockId, Engine, Event, EventKind, SimTime};
use proptest::prelude::*;

const AWG_SLOTS: [u8; 3] = [1, 2, 3];
const DAQ_SLOT: u8 = 4;

fn backplane() -> Backplane {
    let mut b = Backplane::new(1, ChassisTopology::standalone());
    for s in AWG_SLOTS {
        b.register_module(s, ModuleKind::Awg).unwrap();
    }
    b.register_module(DAQ_SLOT, ModuleKind::Daq).unwrap();
    b
}

/// Runs the FSM from a level-1 trigger at `epoch` and collects every
/// module-bound delivery as (slot, due, code).
fn deliveries(b: &mut Backplane, epoch: SimTime, extra: Vec<Event>) -> Vec<(u8, SimTime, u8)> {
    let mut eng = Engine::new();
    eng.run_until(epoch, |_, _, _| {});
    for e in b.level1_trigger(epoch).into_iter().chain(extra) {
        eng.schedule(e).unwrap();
    }
    let mut out = Vec::new();
    eng.run_to_idle(SimTime::from_us(1_000_000), |eng, _, ev| {
        if ev.target == BlockId::BACKPLANE {
            for e in b.handle_event(&ev).unwrap() {
                eng.schedule(e).unwrap();
            }
        } else {
            out.push((ev.target.0 as u8, ev.due, ev.payload[0]));
        }
    });
    out
}

fn ticks() -> impl Strategy<Value = Vec<u32>> {
    proptest::collection::btree_set(0u32..5_000, 1..20).prop_map(|s: BTreeSet<u32>| s.into_iter().collect())
}

proptest! {
    #[test]
    fn raw_instruction_round_trips(tick in any::<u32>(), ty in 0usize..4) {
        let ty = [TriggerType::Start, TriggerType::Stop, TriggerType::Branch, TriggerType::Feedback][ty];
        let i = TriggerInstruction::new(ty, tick);
        prop_assert_eq!(i.raw(), (tick as u64) << 4 | ty as u64);
        prop_assert!(i.raw() < 1 << 36);
        prop_assert_eq!(TriggerInstruction::from_raw(i.raw()).unwrap(), i);
    }

    #[test]
    fn every_instruction_arrives_42_ns_after_its_timestamp(
        tables in proptest::collection::vec(ticks(), 3..=3),
        epoch_ns in 0u64..10_000,
    ) {
        let mut b = backplane();
        for (slot, t) in AWG_SLOTS.iter().zip(&tables) {
            let ins = t.iter().map(|&k| TriggerInstruction::new(TriggerType::Start, k)).collect();
            b.set_table(*slot, TriggerTable::new(ins, None).unwrap()).unwrap();
        }
        let epoch = SimTime::from_ns(epoch_ns);
        let got = deliveries(&mut b, epoch, Vec::new());
        let mut want: Vec<(u8, SimTime, u8)> = AWG_SLOTS
            .iter()
            .zip(&tables)
            .flat_map(|(&s, t)| t.iter().map(move |&k| (s, SimTime::from_ns(epoch_ns + 4 * k as u64 + 42), CODE_START)))
            .collect();
        want.sort_by_key(|&(s, t, _)| (t, s));
        prop_assert_eq!(got, want);
    }

    #[test]
    fn feedback_follows_the_latched_bit(bit in 0u8..2, tick in 10u32..1_000) {
        let mut b = backplane();
        let fb = Some(FeedbackSource { daq_slot: DAQ_SLOT, channel: 3 });
        b.set_table(3, TriggerTable::new(vec![TriggerInstruction::new(TriggerType::Feedback, tick)], fb).unwrap()).unwrap();
        let bits = FeedbackBits { daq_slot: DAQ_SLOT, mask: 1 << 3, bits: (bit as u16) << 3 };
        // Result lands exactly on the instruction's timestamp.
        let result = Event::new(SimTime::from_ns(4 * tick as u64), BlockId::BACKPLANE, EventKind::FeedbackResult)
            .with_payload(bits.encode());
        let got = deliveries(&mut b, SimTime::ZERO, vec![result]);
        let code = if bit == 0 { CODE_BRANCH0 } else { CODE_BRANCH1 };
        prop_assert_eq!(got, vec![(3, SimTime::from_ns(4 * tick as u64 + 42), code)]);
    }
}

#[test]
fn nothing_is_emitted_before_the_level1_trigger() {
    let mut b = backplane();
    b.set_table(
        1,
        TriggerTable::new(vec![TriggerInstruction::new(TriggerType::Start, 0)], None).unwrap(),
    )
    .unwrap();
    assert!(b.fsm_step(0).is_err());
    assert!(b.emissions().is_empty());
}
