// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Benchmark registry and the pieces every benchmark shares.

use m2cs_backplane::chassis::Chassis;
use m2cs_backplane::{TriggerInstruction, TriggerType};
use m2cs_protocol::payload::WriteTrigTable;
use m2cs_signal::{DacCode, SampleFormat};

use crate::config::{Config, Key};
use crate::error::CliError;
use crate::report::Report;
use crate::session::Session;

pub mod adc;
pub mod demod;
pub mod feedback;
pub mod mixer;
pub mod qubit;
pub mod rb;

/// Everything a benchmark needs besides its own code.
pub struct Ctx {
    pub cfg: Config,
    pub seed: u64,
    /// `host:port` of a served chassis; in-process when absent.
    pub remote: Option<String>,
    pub chassis: u8,
}

impl Ctx {
    pub fn local(cfg: Config, seed: u64) -> Ctx {
        Ctx {
            cfg,
            seed,
            remote: None,
            chassis: 1,
        }
    }

    pub fn report(&self, name: &str) -> Report {
        Report::new(name, self.seed, self.cfg.values())
    }

    /// In-process session on `build(chassis id, seed)`, or the remote
    /// chassis when one was given.
    pub fn session(&self, name: &'static str, build: impl FnOnce(u8, u64) -> Chassis) -> Result<Session, CliError> {
        match &self.remote {
            None => Ok(Session::local(name, build(self.chassis, self.seed))),
            // A fresh sequence space per connection keeps the server's
            // duplicate cache from answering for an earlier session.
            Some(addr) => Session::remote(name, addr, self.chassis, rand::random::<u32>() | 1),
        }
    }

    /// Refuses a remote target for benchmarks that inspect the hardware.
    pub fn require_local(&self, name: &'static str) -> Result<(), CliError> {
        match self.remote {
            Some(_) => Err(CliError::LocalOnly(name)),
            None => Ok(()),
        }
    }
}

pub struct Benchmark {
    pub name: &'static str,
    pub about: &'static str,
    pub schema: &'static [Key],
    /// Runs against a served chassis with `--remote`.
    pub remote: bool,
    pub run: fn(&Ctx) -> Result<Report, CliError>,
}

pub const ALL: &[Benchmark] = &[
    adc::SFDR,
    adc::ENOB,
    demod::SWEEP,
    demod::MULTIPLEX,
    mixer::MIXER_CAL,
    feedback::FEEDBACK,
    qubit::READOUT_FIDELITY,
    qubit::T1,
    qubit::RAMSEY,
    qubit::ECHO,
    rb::RB1,
    rb::RB2,
];

pub fn find(name: &str) -> Result<&'static Benchmark, CliError> {
    ALL.iter()
        .find(|b| b.name == name)
        .ok_or_else(|| CliError::UnknownBenchmark(name.to_string()))
}

/// Resolves the configuration and runs `name`.
pub fn run(
    name: &str,
    file: &[(String, String)],
    overrides: &[(String, String)],
    seed: u64,
    remote: Option<String>,
    chassis: u8,
) -> Result<Report, CliError> {
    let b = find(name)?;
    let cfg = Config::resolve(b.schema, file, overrides)?;
    if remote.is_some() && !b.remote {
        return Err(CliError::LocalOnly(b.name));
    }
    (b.run)(&Ctx {
        cfg,
        seed,
        remote,
        chassis,
    })
}

/// True when every key still holds its default, which is when frozen
/// reference values apply.
pub fn is_default(cfg: &Config, schema: &[Key]) -> bool {
    Config::resolve(schema, &[], &[]).map(|d| d == *cfg).unwrap_or(false)
}

/// Volts to a 14-bit DAC code, rounded and clipped.
pub fn dac(v: f64) -> i16 {
    DacCode::from_volts(v).code()
}

pub fn dac_all(v: &[f64]) -> Vec<i16> {
    m2cs_signal::quantize(v, SampleFormat::Dac)
}

pub fn table(target: u8, instrs: &[(TriggerType, u32)], feedback: Option<(u8, u8)>) -> WriteTrigTable {
    WriteTrigTable {
        target_slot: target,
        append: false,
        feedback,
        instructions: instrs
            .iter()
            .map(|&(t, k)| TriggerInstruction::new(t, k).raw())
            .collect(),
    }
}

/// Smallest level-1 period, in ns, covering `busy_ns` of activity.
pub fn period_ns(busy_ns: u64) -> u32 {
    (busy_ns + 200).div_ceil(4) as u32 * 4
}
