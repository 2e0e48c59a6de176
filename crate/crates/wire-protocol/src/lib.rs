// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Host-to-chassis UDP command protocol.

pub mod client;
pub mod frame;
pub mod payload;
pub mod server;

pub use client::{Client, ClientError, Endpoint, InProcess, Lossy, Request, Transport, Udp};
pub use frame::{Frame, FrameError};
pub use payload::{Opcode, PayloadError, Status};
