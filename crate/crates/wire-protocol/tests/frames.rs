// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

use m2cs_protocol::frame::{FrameError, MAX_PAYLOAD};
use m2cs_protocol::Frame;
use proptest::prelude::*;

fn arb_frame() -> impl Strategy<Value = Frame> {
    (
        any::<u8>(),
        any::<u32>(),
        any::<u8>(),
        any::<u8>(),
        any::<u16>(),
        prop::collection::vec(any::<u8>(), 0..=MAX_PAYLOAD),
    )
        .prop_map(|(flags, seq, chassis, slot, opcode, payload)| Frame {
            flags,
            seq,
            chassis,
            slot,
            opcode,
            payload,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn frames_round_trip(f in arb_frame()) {
        let b = f.encode().unwrap();
        prop_assert_eq!(b.len(), f.encoded_len());
        prop_assert_eq!(Frame::decode(&b).unwrap(), f);
    }

    #[test]
    fn any_single_byte_corruption_is_rejected(f in arb_frame(), pos in any::<prop::sample::Index>(), x in 1u8..=255) {
        let mut b = f.encode().unwrap();
        let k = pos.index(b.len());
        b[k] ^= x;
        prop_assert!(Frame::decode(&b).is_err());
    }

    #[test]
    fn truncation_is_rejected(f in arb_frame(), cut in any::<prop::sample::Index>()) {
        let b = f.encode().unwrap();
        let n = cut.index(b.len());
        prop_assert!(Frame::decode(&b[..n]).is_err());
    }
}

#[test]
fn oversized_payload_is_refused() {
    let f = Frame::request(1, 0, 0, 1, vec![0; MAX_PAYLOAD + 1]);
    assert_eq!(f.encode(), Err(FrameError::PayloadTooLarge(MAX_PAYLOAD + 1)));
}
