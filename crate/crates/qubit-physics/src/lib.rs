// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Envelope-level transmon with dispersive readout, Clifford randomized
//! benchmarking, and the decay fits used to analyse them.

pub mod bloch;
pub mod clifford;
pub mod fit;
pub mod rb;

use std::f64::consts::PI;

use thiserror::Error;

use m2cs_mixer::RfTone;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitParams {
    pub f01_hz: f64,
    pub t1_us: f64,
    pub t2_ramsey_us: f64,
    pub t2_echo_us: f64,
    pub readout_f_hz: f64,
    /// Phase of the |1⟩ response relative to |0⟩.
    pub readout_phase_shift_deg: f64,
    /// Cloud separation over per-axis σ after demodulation.
    pub readout_snr: f64,
    pub readout_amplitude_v: f64,
    /// Rotation rate per volt of drive envelope.
    pub rabi_hz_per_v: f64,
    pub gate_error_1q: f64,
    pub gate_error_2q: f64,
}

impl QubitParams {
    /// Coherence values of the reference device; the remaining fields are
    /// emulator defaults.
    pub fn reference() -> Self {
        QubitParams {
            f01_hz: 4.5e9,
            t1_us: 128.7,
            t2_ramsey_us: 12.0,
            t2_echo_us: 43.4,
            readout_f_hz: 6.05e9,
            readout_phase_shift_deg: 180.0,
            readout_snr: 4.82,
            readout_amplitude_v: 5e-3,
            rabi_hz_per_v: 50e6,
            gate_error_1q: 0.0008,
            gate_error_2q: 0.0054,
        }
    }

    pub fn validate(&self) -> Result<(), QubitError> {
        let pos = [
            self.t1_us,
            self.t2_ramsey_us,
            self.t2_echo_us,
            self.readout_snr,
            self.rabi_hz_per_v,
            self.readout_amplitude_v,
        ];
        if pos.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(QubitError::InvalidParams(
                "times, SNR, amplitude and Rabi rate must be positive".into(),
            ));
        }
        if self.t2_ramsey_us > 2.0 * self.t1_us || self.t2_echo_us > 2.0 * self.t1_us {
            return Err(QubitError::InvalidParams("T2 exceeds 2·T1".into()));
        }
        if self.t2_ramsey_us > self.t2_echo_us {
            return Err(QubitError::InvalidParams("T2 Ramsey exceeds T2 echo".into()));
        }
        for p in [self.gate_error_1q, self.gate_error_2q] {
            if !(0.0..=1.0).contains(&p) {
                return Err(QubitError::InvalidParams(format!("gate error {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Half-width of the quasi-static detuning distribution that turns the
    /// echo decay rate into the Ramsey one.
    pub fn quasi_static_hwhm_hz(&self) -> f64 {
        (1.0 / self.t2_ramsey_us - 1.0 / self.t2_echo_us) * 1e6 / (2.0 * PI)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QubitError {
    #[error("invalid qubit parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    T1,
    Ramsey,
    Echo,
}

/// Ideal excited-state curve of each coherence experiment.
pub fn survival_probability(exp: Experiment, t_ns: f64, params: &QubitParams, detuning_hz: f64) -> f64 {
    let t_us = t_ns * 1e-3;
    match exp {
        Experiment::T1 => (-t_us / params.t1_us).exp(),
        Experiment::Ramsey => {
            0.5 * (1.0 + (-t_us / params.t2_ramsey_us).exp() * (2.0 * PI * detuning_hz * t_ns * 1e-9).cos())
        }
        Experiment::Echo => 0.5 * (1.0 + (-t_us / params.t2_echo_us).exp()),
    }
}

/// Readout response for one shot: the probe tone and the baseband noise
/// that sets the demodulated cloud SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutSignal {
    pub tone: RfTone,
    /// Total per-quadrature noise referred to the DAQ baseband.
    pub noise_rms_v: f64,
}

/// Per-quadrature noise that gives separation/σ = `snr` after demodulating
/// with `window`.
pub fn readout_noise_rms(params: &QubitParams, window: &[f64]) -> f64 {
    let sum: f64 = window.iter().sum();
    let sum_sq: f64 = window.iter().map(|w| w * w).sum();
    let half = params.readout_phase_shift_deg.to_radians() / 2.0;
    let separation = 2.0 * params.readout_amplitude_v * half.sin().abs();
    separation * sum / (params.readout_snr * sum_sq.sqrt())
}

/// Tone with phase 0 (state 0) or the configured shift (state 1) at the
/// start of a window beginning at `t0_ps`.
pub fn readout_signal(state: u8, params: &QubitParams, t0_ps: i64, window: &[f64]) -> ReadoutSignal {
    let shift = if state == 0 {
        0.0
    } else {
        params.readout_phase_shift_deg.to_radians()
    };
    let probe = RfTone {
        freq_hz: params.readout_f_hz,
        amplitude_v: params.readout_amplitude_v,
        phase_rad: 0.0,
    };
    let at_start = 2.0 * PI * probe.cycles_at(t0_ps);
    ReadoutSignal {
        tone: RfTone {
            phase_rad: shift - at_start,
            ..probe
        },
        noise_rms_v: readout_noise_rms(params, window),
    }
}
