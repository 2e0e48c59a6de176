// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use m2cs_qubit::bloch::Bloch;
use m2cs_qubit::clifford::{c1, c1_index, C1_SIZE};
use m2cs_qubit::fit::{fit_decay, Model};
use m2cs_qubit::rb::{clifford_fidelity, rb_experiment};
use m2cs_qubit::{survival_probability, Experiment, QubitParams};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn survival_reference_points() {
    let p = QubitParams::reference();
    assert!((survival_probability(Experiment::T1, 128_700.0, &p, 0.0) - (-1.0f64).exp()).abs() < 1e-12);
    assert_eq!(survival_probability(Experiment::T1, 0.0, &p, 0.0), 1.0);
    assert_eq!(survival_probability(Experiment::Ramsey, 0.0, &p, 1e6), 1.0);
    let e = survival_probability(Experiment::Echo, 43_400.0, &p, 0.0);
    assert!((e - 0.5 * (1.0 + (-1.0f64).exp())).abs() < 1e-12);
}

#[test]
fn ideal_gates_sit_on_the_plateau() {
    for nq in [1, 2] {
        let pts = rb_experiment(nq, &[1, 10, 50], 40, 0.0, 9).unwrap();
        assert!(pts.iter().all(|p| p.survival == 1.0), "{nq}: {pts:?}");
    }
}

#[test]
fn rb_fit_recovers_a_noiseless_decay() {
    let m: Vec<f64> = [1.0, 20.0, 50.0, 100.0, 200.0, 400.0, 700.0].to_vec();
    let y: Vec<f64> = m.iter().map(|&m| 0.5 * 0.995f64.powf(m) + 0.5).collect();
    let fit = fit_decay(&m, &y, Model::Rb, None).unwrap();
    assert!((fit.params[1] - 0.995).abs() < 1e-9);
    assert!((clifford_fidelity(1, fit.params[1]) - 0.9975).abs() < 1e-9);
}

fn norm(b: &Bloch) -> f64 {
    (b.x * b.x + b.y * b.y + b.z * b.z).sqrt()
}

proptest! {
    #[test]
    fn rotations_preserve_the_bloch_norm(ops in proptest::collection::vec((0.0f64..2.0 * PI, 0.0f64..2.0 * PI), 1..200)) {
        let mut b = Bloch::GROUND;
        for (theta, phi) in ops {
            b.rotate(theta, phi);
        }
        prop_assert!((norm(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relaxation_contracts_toward_ground(theta in 0.0f64..PI, dt in 0.0f64..1e6, t1 in 1.0f64..500.0, ratio in 0.05f64..2.0, det in -1e6f64..1e6) {
        let mut b = Bloch::GROUND;
        b.rotate(theta, 0.3);
        let before = b.p1();
        b.relax(dt, t1, t1 * ratio, det);
        prop_assert!(norm(&b) <= 1.0 + 1e-12);
        prop_assert!(b.p1() <= before + 1e-12);
        prop_assert!((0.0..=1.0).contains(&b.p1()));
    }

    #[test]
    fn clifford_lookup_ignores_global_phase(idx in 0usize..C1_SIZE, theta in 0.0f64..2.0 * PI) {
        let u = c1()[idx] * Complex64::from_polar(1.0, theta);
        prop_assert_eq!(c1_index(&u), Some(idx));
    }

    #[test]
    fn clifford_products_stay_in_the_group(a in 0usize..C1_SIZE, b in 0usize..C1_SIZE) {
        prop_assert!(c1_index(&(c1()[a] * c1()[b])).is_some());
    }
}
