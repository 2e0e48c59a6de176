// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

use std::io;

use m2cs_protocol::ClientError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(#[from] ConfigError),
    #[error("emulator unreachable at {addr}: {reason}")]
    EmulatorUnreachable { addr: String, reason: String },
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("{0} needs the in-process emulator (drop --remote)")]
    LocalOnly(&'static str),
    #[error("unknown benchmark {0:?}")]
    UnknownBenchmark(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Experiment(String),
}

impl CliError {
    /// Process exit status. 1 is reserved for failed thresholds.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) | CliError::UnknownBenchmark(_) | CliError::LocalOnly(_) => 2,
            CliError::EmulatorUnreachable { .. } => 3,
            CliError::PortInUse(_) => 4,
            _ => 5,
        }
    }
}

pub fn experiment(msg: impl std::fmt::Display) -> CliError {
    CliError::Experiment(msg.to_string())
}
