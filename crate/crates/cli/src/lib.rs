// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Benchmark harness and server front end for the emulator.

pub mod bench;
pub mod config;
pub mod error;
pub mod report;
pub mod serve;
pub mod session;
