// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Single-shot Bloch-vector evolution: instantaneous drive rotations,
//! analytic T1/T2 relaxation between them, and a per-shot quasi-static
//! detuning drawn from a Lorentzian.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::QubitParams;

/// Bloch vector with `z = +1` in the ground state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bloch {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Bloch {
    pub const GROUND: Bloch = Bloch { x: 0.0, y: 0.0, z: 1.0 };

    pub fn p1(&self) -> f64 {
        ((1.0 - self.z) / 2.0).clamp(0.0, 1.0)
    }

    /// Rotation by `theta` about the equatorial axis at angle `phi` from x.
    pub fn rotate(&mut self, theta: f64, phi: f64) {
        let (nx, ny) = (phi.cos(), phi.sin());
        let (c, s) = (theta.cos(), theta.sin());
        let v = [self.x, self.y, self.z];
        let n = [nx, ny, 0.0];
        let dot = n[0] * v[0] + n[1] * v[1];
        let cross = [
            n[1] * v[2] - n[2] * v[1],
            n[2] * v[0] - n[0] * v[2],
            n[0] * v[1] - n[1] * v[0],
        ];
        let r: Vec<f64> = (0..3)
            .map(|k| v[k] * c + cross[k] * s + n[k] * dot * (1.0 - c))
            .collect();
        self.x = r[0];
        self.y = r[1];
        self.z = r[2];
    }

    /// Free evolution for `dt_ns` with precession at `detuning_hz`.
    pub fn relax(&mut self, dt_ns: f64, t1_us: f64, t2_us: f64, detuning_hz: f64) {
        let t_us = dt_ns * 1e-3;
        let e1 = (-t_us / t1_us).exp();
        let e2 = (-t_us / t2_us).exp();
        let a = 2.0 * PI * detuning_hz * dt_ns * 1e-9;
        let (c, s) = (a.cos(), a.sin());
        let (x, y) = (self.x * c - self.y * s, self.x * s + self.y * c);
        self.x = x * e2;
        self.y = y * e2;
        self.z = 1.0 - (1.0 - self.z) * e1;
    }
}

/// A drive pulse reduced to its rotation, applied at its centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub at_ns: f64,
    pub theta: f64,
    pub phi: f64,
}

impl Rotation {
    /// Rotation produced by a complex drive envelope `(i, q)` in volts
    /// sampled every `dt_ns`.
    pub fn from_envelope(i: &[f64], q: &[f64], dt_ns: f64, rabi_hz_per_v: f64, start_ns: f64) -> Rotation {
        let si: f64 = i.iter().sum();
        let sq: f64 = q.iter().sum();
        let area = si.hypot(sq) * dt_ns * 1e-9;
        let dur = i.len().max(q.len()) as f64 * dt_ns;
        Rotation {
            at_ns: start_ns + dur / 2.0,
            theta: 2.0 * PI * rabi_hz_per_v * area,
            phi: sq.atan2(si),
        }
    }
}

/// One qubit through one shot.
#[derive(Debug, Clone)]
pub struct Transmon {
    params: QubitParams,
    /// Fixed drive detuning, added to the per-shot draw.
    pub drive_detuning_hz: f64,
    state: Bloch,
    t_ns: f64,
    shot_detuning_hz: f64,
    rng: ChaCha8Rng,
}

impl Transmon {
    pub fn new(params: QubitParams) -> Self {
        Transmon {
            params,
            drive_detuning_hz: 0.0,
            state: Bloch::GROUND,
            t_ns: 0.0,
            shot_detuning_hz: 0.0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn params(&self) -> &QubitParams {
        &self.params
    }

    /// Ground state at `t_ns`, with a fresh quasi-static detuning.
    pub fn begin_shot(&mut self, t_ns: f64, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = Bloch::GROUND;
        self.t_ns = t_ns;
        let hwhm = self.params.quasi_static_hwhm_hz();
        let u: f64 = self.rng.gen_range(-0.5..0.5);
        self.shot_detuning_hz = hwhm * (PI * u).tan();
    }

    pub fn shot_detuning_hz(&self) -> f64 {
        self.shot_detuning_hz
    }

    pub fn state(&self) -> Bloch {
        self.state
    }

    pub fn advance_to(&mut self, t_ns: f64) {
        if t_ns > self.t_ns {
            let det = self.drive_detuning_hz + self.shot_detuning_hz;
            self.state
                .relax(t_ns - self.t_ns, self.params.t1_us, self.params.t2_echo_us, det);
            self.t_ns = t_ns;
        }
    }

    pub fn apply(&mut self, r: &Rotation) {
        self.advance_to(r.at_ns);
        self.state.rotate(r.theta, r.phi);
    }

    /// Projective measurement at `t_ns`; the state collapses.
    pub fn measure(&mut self, t_ns: f64) -> u8 {
        self.advance_to(t_ns);
        let one = self.rng.gen::<f64>() < self.state.p1();
        self.state = if one {
            Bloch {
                x: 0.0,
                y: 0.0,
                z: -1.0,
            }
        } else {
            Bloch::GROUND
        };
        one as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{survival_probability, Experiment};

    fn params() -> QubitParams {
        QubitParams::reference()
    }

    fn pi_half(at: f64, phi: f64) -> Rotation {
        Rotation {
            at_ns: at,
            theta: PI / 2.0,
            phi,
        }
    }

    #[test]
    fn rotations() {
        let mut b = Bloch::GROUND;
        b.rotate(PI, 0.0);
        assert!((b.z + 1.0).abs() < 1e-15 && b.p1() > 1.0 - 1e-15);
        let mut b = Bloch::GROUND;
        b.rotate(PI / 2.0, 0.0);
        assert!((b.y + 1.0).abs() < 1e-15);
        let mut b = Bloch::GROUND;
        b.rotate(PI / 2.0, PI / 2.0);
        assert!((b.x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn envelope_area_sets_rotation() {
        // 40 samples at 0.5 ns, 0.5 V, 50 MHz/V: 10 V·ns → π.
        let i = vec![0.5; 40];
        let r = Rotation::from_envelope(&i, &[0.0; 40], 0.5, 50e6, 100.0);
        assert!((r.theta - PI).abs() < 1e-12);
        assert_eq!((r.phi, r.at_ns), (0.0, 110.0));
        let r = Rotation::from_envelope(&[0.0; 40], &i, 0.5, 50e6, 0.0);
        assert!((r.phi - PI / 2.0).abs() < 1e-15);
    }

    /// Averages the analytic P1 over many shots of a sequence.
    fn mean_p1(seq: impl Fn(&mut Transmon), measure_at: f64, shots: u64) -> f64 {
        let mut q = Transmon::new(params());
        (0..shots)
            .map(|s| {
                q.begin_shot(0.0, s);
                seq(&mut q);
                q.advance_to(measure_at);
                q.state().p1()
            })
            .sum::<f64>()
            / shots as f64
    }

    #[test]
    fn t1_curve_is_exact() {
        let t = 128_700.0;
        let p = mean_p1(
            |q| {
                q.apply(&Rotation {
                    at_ns: 0.0,
                    theta: PI,
                    phi: 0.0,
                })
            },
            t,
            4,
        );
        assert!((p - survival_probability(Experiment::T1, t, &params(), 0.0)).abs() < 1e-12);
    }

    #[test]
    fn ramsey_averages_to_the_ramsey_decay() {
        let t = 6000.0;
        let p = mean_p1(
            |q| {
                q.apply(&pi_half(0.0, 0.0));
                q.apply(&pi_half(t, 0.0));
            },
            t,
            40_000,
        );
        let expect = survival_probability(Experiment::Ramsey, t, &params(), 0.0);
        assert!((p - expect).abs() < 0.01, "{p} vs {expect}");
    }

    #[test]
    fn virtual_detuning_produces_fringes() {
        let mut q = Transmon::new(params());
        q.begin_shot(0.0, 3);
        let det = q.shot_detuning_hz();
        let (t, f) = (3000.0, 0.25e6);
        q.apply(&pi_half(0.0, 0.0));
        q.apply(&pi_half(t, 2.0 * PI * f * t * 1e-9));
        let e = (-t * 1e-3 / params().t2_echo_us).exp();
        let expect = 0.5 * (1.0 + e * (2.0 * PI * (f - det) * t * 1e-9).cos());
        assert!((q.state().p1() - expect).abs() < 1e-12);
    }

    #[test]
    fn echo_refocuses_quasi_static_detuning() {
        let t = 20_000.0;
        for seed in 0..20 {
            let mut q = Transmon::new(params());
            q.begin_shot(0.0, seed);
            q.apply(&pi_half(0.0, 0.0));
            q.apply(&Rotation {
                at_ns: t / 2.0,
                theta: PI,
                phi: PI / 2.0,
            });
            q.apply(&pi_half(t, 0.0));
            let expect = survival_probability(Experiment::Echo, t, &params(), 0.0);
            assert!((q.state().p1() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn measurement_is_seeded() {
        let run = |seed: u64| {
            let mut q = Transmon::new(params());
            (0..100)
                .map(|k| {
                    q.begin_shot(0.0, seed * 1000 + k);
                    q.apply(&pi_half(0.0, 0.0));
                    q.measure(10.0)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(1));
        let ones: usize = run(2).iter().map(|&b| b as usize).sum();
        assert!((30..70).contains(&ones));
    }
}
