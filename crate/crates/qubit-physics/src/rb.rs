// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Randomized benchmarking by state-vector trajectories with a depolarizing
//! error after every Clifford, the recovery included.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use nalgebra::{Vector2, Vector4};
use num_complex::Complex64;

use super::clifford::{c1, c2, paulis_1q, paulis_2q, U2, U4};
use super::fit::{fit_decay, Fit, FitError, Model};
use m2cs_signal::mix_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbError {
    #[error("RB supports 1 or 2 qubits, not {0}")]
    BadQubitCount(usize),
    #[error("sequence length must be at least 1")]
    EmptySequence,
    #[error("depolarizing probability {0} outside [0, 1]")]
    BadError(f64),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbShot {
    /// Probability of returning to |0…0⟩ on this trajectory.
    pub survival_probability: f64,
    /// Computational-basis measurement of that trajectory.
    pub survived: bool,
}

fn depolarize<R: Rng>(rng: &mut R, p: f64) -> Option<usize> {
    (p > 0.0 && rng.gen::<f64>() < p).then(|| rng.gen_range(0..4))
}

fn norm_sq<'a>(v: impl Iterator<Item = &'a Complex64>) -> f64 {
    v.map(|z| z.norm_sqr()).sum()
}

/// One trajectory of `m` random Cliffords plus the inverting Clifford.
pub fn rb_sequence(n_qubits: usize, m: usize, gate_error: f64, seed: u64) -> Result<RbShot, RbError> {
    if m == 0 {
        return Err(RbError::EmptySequence);
    }
    if !(0.0..=1.0).contains(&gate_error) {
        return Err(RbError::BadError(gate_error));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p0 = match n_qubits {
        1 => {
            let group = c1();
            let paulis = paulis_1q();
            let mut psi = Vector2::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
            let mut net = U2::identity();
            for _ in 0..m {
                let g = &group[rng.gen_range(0..group.len())];
                psi = g * psi;
                net = g * net;
                if let Some(k) = depolarize(&mut rng, gate_error) {
                    psi = paulis[k] * psi;
                }
            }
            psi = net.adjoint() * psi;
            if let Some(k) = depolarize(&mut rng, gate_error) {
                psi = paulis[k] * psi;
            }
            debug_assert!((norm_sq(psi.iter()) - 1.0).abs() < 1e-9);
            psi[0].norm_sqr()
        }
        2 => {
            let group = c2();
            let paulis = paulis_2q();
            let mut psi = Vector4::from_element(Complex64::new(0.0, 0.0));
            psi[0] = Complex64::new(1.0, 0.0);
            let mut net = U4::identity();
            let pauli_2q = |rng: &mut ChaCha8Rng| -> Option<usize> {
                (gate_error > 0.0 && rng.gen::<f64>() < gate_error).then(|| rng.gen_range(0..16))
            };
            for _ in 0..m {
                let g = &group[rng.gen_range(0..group.len())].unitary;
                psi = g * psi;
                net = g * net;
                if let Some(k) = pauli_2q(&mut rng) {
                    psi = paulis[k] * psi;
                }
            }
            psi = net.adjoint() * psi;
            if let Some(k) = pauli_2q(&mut rng) {
                psi = paulis[k] * psi;
            }
            psi[0].norm_sqr()
        }
        n => return Err(RbError::BadQubitCount(n)),
    };
    let survival_probability = p0.clamp(0.0, 1.0);
    Ok(RbShot {
        survival_probability,
        survived: rng.gen::<f64>() < survival_probability,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbPoint {
    pub m: usize,
    /// Fraction of trajectories measured in |0…0⟩.
    pub survival: f64,
    pub sequences: usize,
}

/// Survival at each length, one measured trajectory per sequence.
pub fn rb_experiment(
    n_qubits: usize,
    lengths: &[usize],
    sequences: usize,
    gate_error: f64,
    seed: u64,
) -> Result<Vec<RbPoint>, RbError> {
    lengths
        .iter()
        .enumerate()
        .map(|(li, &m)| {
            let mut hits = 0usize;
            for s in 0..sequences {
                let shot = rb_sequence(n_qubits, m, gate_error, mix_seed(mix_seed(seed, li as u64), s as u64))?;
                hits += shot.survived as usize;
            }
            Ok(RbPoint {
                m,
                survival: hits as f64 / sequences as f64,
                sequences,
            })
        })
        .collect()
}

/// Average Clifford fidelity from the fitted decay parameter.
pub fn clifford_fidelity(n_qubits: usize, decay: f64) -> f64 {
    let d = (1usize << n_qubits) as f64;
    1.0 - (d - 1.0) / d * (1.0 - decay)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbFit {
    pub fit: Fit,
    pub decay: f64,
    pub clifford_fidelity: f64,
}

pub fn fit_rb(n_qubits: usize, points: &[RbPoint]) -> Result<RbFit, RbError> {
    let m: Vec<f64> = points.iter().map(|p| p.m as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.survival).collect();
    let fit = fit_decay(&m, &y, Model::Rb, None)?;
    let decay = fit.params[1];
    Ok(RbFit {
        decay,
        clifford_fidelity: clifford_fidelity(n_qubits, decay),
        fit,
    })
}
