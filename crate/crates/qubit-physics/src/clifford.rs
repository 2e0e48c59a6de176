// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! One- and two-qubit Clifford groups as explicit unitaries.
//!
//! C1 is generated from H and S. C2 uses the four-class construction
//! (C1⊗C1)·{I, CNOT·S1⊗S1, iSWAP·S1⊗S1, SWAP}, where S1 is the order-3
//! subgroup cycling X→Y→Z. The classes cost 0, 1, 2 and 3 CZ gates.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;

pub type U2 = Matrix2<Complex64>;
pub type U4 = Matrix4<Complex64>;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const I1: Complex64 = Complex64::new(0.0, 1.0);

pub const C1_SIZE: usize = 24;
pub const C2_SIZE: usize = 11_520;

pub fn hadamard() -> U2 {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    U2::new(h, h, h, -h)
}

pub fn phase_s() -> U2 {
    U2::new(C1, C0, C0, I1)
}

pub fn paulis_1q() -> [U2; 4] {
    [
        U2::identity(),
        U2::new(C0, C1, C1, C0),
        U2::new(C0, -I1, I1, C0),
        U2::new(C1, C0, C0, -C1),
    ]
}

pub fn kron(a: &U2, b: &U2) -> U4 {
    U4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

pub fn paulis_2q() -> Vec<U4> {
    let p = paulis_1q();
    p.iter().flat_map(|a| p.iter().map(move |b| kron(a, b))).collect()
}

pub fn cnot() -> U4 {
    let mut m = U4::zeros();
    for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        m[(r, c)] = C1;
    }
    m
}

pub fn iswap() -> U4 {
    let mut m = U4::zeros();
    m[(0, 0)] = C1;
    m[(1, 2)] = I1;
    m[(2, 1)] = I1;
    m[(3, 3)] = C1;
    m
}

pub fn swap() -> U4 {
    let mut m = U4::zeros();
    for (r, c) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        m[(r, c)] = C1;
    }
    m
}

pub fn cz() -> U4 {
    let mut m = U4::identity();
    m[(3, 3)] = -C1;
    m
}

/// Key identifying a unitary up to global phase.
pub fn phase_key<'a>(entries: impl Iterator<Item = &'a Complex64> + Clone) -> Vec<i64> {
    let pivot = entries.clone().find(|z| z.norm() > 1e-6).copied().unwrap_or(C1);
    let rot = pivot.conj() / pivot.norm();
    entries
        .flat_map(|z| {
            let w = z * rot;
            [(w.re * 1e6).round() as i64, (w.im * 1e6).round() as i64]
        })
        .collect()
}

fn c1_table() -> &'static Vec<U2> {
    static T: OnceLock<Vec<U2>> = OnceLock::new();
    T.get_or_init(|| {
        let gens = [hadamard(), phase_s()];
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut queue = VecDeque::from([U2::identity()]);
        seen.insert(phase_key(U2::identity().iter()));
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for g in &gens {
                let v = g * u;
                if seen.insert(phase_key(v.iter())) {
                    queue.push_back(v);
                }
            }
        }
        out
    })
}

/// The 24 single-qubit Cliffords, identity first.
pub fn c1() -> &'static [U2] {
    c1_table()
}

/// Maps Pauli `p` under conjugation by `u`; returns the Pauli index and
/// sign when the image is a signed Pauli.
fn conjugate(u: &U2, p: &U2) -> Option<(usize, f64)> {
    let img = u * p * u.adjoint();
    paulis_1q().iter().enumerate().find_map(|(k, q)| {
        for s in [1.0, -1.0] {
            if (img - q * Complex64::new(s, 0.0)).norm() < 1e-9 {
                return Some((k, s));
            }
        }
        None
    })
}

/// {I, R, R²} with R: X→Y→Z→X.
pub fn s1() -> [U2; 3] {
    let p = paulis_1q();
    let r = *c1()
        .iter()
        .find(|u| conjugate(u, &p[1]) == Some((2, 1.0)) && conjugate(u, &p[2]) == Some((3, 1.0)))
        .expect("C1 contains the cyclic permutation");
    [U2::identity(), r, r * r]
}

/// Two-qubit Clifford with its class (number of CZ gates in the native
/// decomposition).
#[derive(Debug, Clone)]
pub struct Clifford2 {
    pub unitary: U4,
    pub cz_count: u8,
}

fn c2_table() -> &'static Vec<Clifford2> {
    static T: OnceLock<Vec<Clifford2>> = OnceLock::new();
    T.get_or_init(|| {
        let c = c1();
        let s = s1();
        let locals: Vec<U4> = c.iter().flat_map(|a| c.iter().map(move |b| kron(a, b))).collect();
        let s_pairs: Vec<U4> = s.iter().flat_map(|a| s.iter().map(move |b| kron(a, b))).collect();
        let mut out = Vec::with_capacity(C2_SIZE);
        out.extend(locals.iter().map(|u| Clifford2 {
            unitary: *u,
            cz_count: 0,
        }));
        for (core, cost) in [(cnot(), 1u8), (iswap(), 2)] {
            for l in &locals {
                for sp in &s_pairs {
                    out.push(Clifford2 {
                        unitary: l * core * sp,
                        cz_count: cost,
                    });
                }
            }
        }
        let sw = swap();
        out.extend(locals.iter().map(|l| Clifford2 {
            unitary: l * sw,
            cz_count: 3,
        }));
        out
    })
}

/// All 11 520 two-qubit Cliffords.
pub fn c2() -> &'static [Clifford2] {
    c2_table()
}

/// Mean CZ count of a uniformly drawn two-qubit Clifford.
pub fn mean_cz_per_clifford() -> f64 {
    c2().iter().map(|c| c.cz_count as f64).sum::<f64>() / C2_SIZE as f64
}

/// Index of `u` in C1 up to global phase.
pub fn c1_index(u: &U2) -> Option<usize> {
    static IDX: OnceLock<HashMap<Vec<i64>, usize>> = OnceLock::new();
    IDX.get_or_init(|| c1().iter().enumerate().map(|(k, m)| (phase_key(m.iter()), k)).collect())
        .get(&phase_key(u.iter()))
        .copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_unitary4(u: &U4) -> bool {
        (u * u.adjoint() - U4::identity()).norm() < 1e-12
    }

    #[test]
    fn c1_has_24_distinct_elements_closed_under_product() {
        let c = c1();
        assert_eq!(c.len(), C1_SIZE);
        for a in c {
            for b in c {
                assert!(c1_index(&(a * b)).is_some());
            }
            let img = paulis_1q();
            assert!(conjugate(a, &img[1]).is_some() && conjugate(a, &img[3]).is_some());
        }
    }

    #[test]
    fn s1_cycles_paulis() {
        let [i, r, r2] = s1();
        assert_eq!(c1_index(&i), Some(0));
        assert!(c1_index(&(r * r2)) == Some(0));
        let p = paulis_1q();
        assert_eq!(conjugate(&r, &p[3]), Some((1, 1.0)));
    }

    #[test]
    fn c2_has_11520_distinct_unitaries() {
        let c = c2();
        assert_eq!(c.len(), C2_SIZE);
        let keys: HashSet<Vec<i64>> = c.iter().map(|x| phase_key(x.unitary.iter())).collect();
        assert_eq!(keys.len(), C2_SIZE);
        assert!(c.iter().step_by(97).all(|x| is_unitary4(&x.unitary)));
        assert!((mean_cz_per_clifford() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn c2_normalizes_the_pauli_group() {
        let p = paulis_2q();
        let keys: HashSet<Vec<i64>> = p.iter().map(|m| phase_key(m.iter())).collect();
        for c in c2().iter().step_by(331) {
            for q in &p {
                let img = c.unitary * q * c.unitary.adjoint();
                assert!(keys.contains(&phase_key(img.iter())));
            }
        }
    }

    #[test]
    fn native_gate_counts() {
        let h = kron(&U2::identity(), &hadamard());
        let via_cz = h * cz() * h;
        assert_eq!(phase_key(via_cz.iter()), phase_key(cnot().iter()));
    }
}
