// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! A protocol client bound either to an in-process chassis or to a served
//! one.

use std::net::{SocketAddr, ToSocketAddrs};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use m2cs_backplane::chassis::Chassis;
use m2cs_protocol::{Client, ClientError, InProcess, Transport, Udp};

use crate::error::CliError;

pub type BoxedTransport = Box<dyn Transport>;

pub struct Session {
    pub client: Client<BoxedTransport>,
    local: Option<Arc<Mutex<Chassis>>>,
    bench: &'static str,
}

impl Session {
    pub fn local(bench: &'static str, chassis: Chassis) -> Session {
        let id = chassis.id();
        let hw = Arc::new(Mutex::new(chassis));
        let t: BoxedTransport = Box::new(InProcess::new(hw.clone()));
        Session {
            client: Client::new(t, id, 1),
            local: Some(hw),
            bench,
        }
    }

    /// Connects and checks that the chassis answers.
    pub fn remote(bench: &'static str, addr: &str, chassis: u8, first_seq: u32) -> Result<Session, CliError> {
        let unreachable = |reason: String| CliError::EmulatorUnreachable {
            addr: addr.to_string(),
            reason,
        };
        let sa: SocketAddr = addr
            .to_socket_addrs()
            .map_err(|e| unreachable(e.to_string()))?
            .next()
            .ok_or_else(|| unreachable("no address".into()))?;
        let t: BoxedTransport = Box::new(Udp::connect(sa).map_err(|e| unreachable(e.to_string()))?);
        let mut client = Client::new(t, chassis, first_seq)
            .with_timeout(Duration::from_millis(100))
            .with_attempts(5);
        match client.identify() {
            Ok(info) if info.chassis == chassis => {}
            Ok(info) => return Err(unreachable(format!("answered as chassis {}", info.chassis))),
            Err(ClientError::Timeout { .. }) => return Err(unreachable("no response".into())),
            Err(e) => return Err(unreachable(e.to_string())),
        }
        Ok(Session {
            client: client.with_attempts(10).with_timeout(Duration::from_millis(200)),
            local: None,
            bench,
        })
    }

    pub fn is_local(&self) -> bool {
        self.local.is_some()
    }

    /// Direct access to the emulated hardware, for measurements the wire
    /// protocol cannot express.
    pub fn hw(&self) -> Result<MutexGuard<'_, Chassis>, CliError> {
        let hw = self.local.as_ref().ok_or(CliError::LocalOnly(self.bench))?;
        Ok(hw.lock().expect("single-threaded use"))
    }
}
