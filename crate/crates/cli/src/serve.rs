// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Serves emulated chassis over UDP, one socket and one worker per chassis.
//! Chassis `k` listens on `base_port + k`.

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use m2cs_backplane::chassis::{standard, Chassis};
use m2cs_protocol::server::{serve, ServeStats};
use m2cs_qubit::QubitParams;
use m2cs_signal::mix_seed;

use crate::error::CliError;

pub const DEFAULT_BASE_PORT: u16 = 7044;
const POLL: Duration = Duration::from_millis(50);

pub struct Server {
    units: Vec<(u8, UdpSocket, Arc<Mutex<Chassis>>)>,
}

impl Server {
    /// Binds every socket up front so a busy port fails before any
    /// chassis starts answering.
    pub fn bind(host: &str, base_port: u16, chassis: u8, seed: u64) -> Result<Server, CliError> {
        let mut units = Vec::with_capacity(chassis as usize);
        for id in 1..=chassis {
            let port = base_port.checked_add(id as u16).ok_or(CliError::PortInUse(u16::MAX))?;
            let sock = UdpSocket::bind((host, port)).map_err(|e| match e.kind() {
                io::ErrorKind::AddrInUse => CliError::PortInUse(port),
                _ => CliError::Io(e),
            })?;
            let hw = standard(id, mix_seed(seed, id as u64), QubitParams::reference());
            units.push((id, sock, Arc::new(Mutex::new(hw))));
        }
        Ok(Server { units })
    }

    pub fn addrs(&self) -> Vec<SocketAddr> {
        self.units.iter().filter_map(|(_, s, _)| s.local_addr().ok()).collect()
    }

    /// Answers until `stop` is set. `on_peer(chassis, addr)` runs once per
    /// new client of each chassis.
    pub fn run(
        self,
        stop: Arc<AtomicBool>,
        on_peer: impl Fn(u8, SocketAddr) + Send + Sync + 'static,
    ) -> Result<Vec<ServeStats>, CliError> {
        let on_peer = Arc::new(on_peer);
        let workers: Vec<_> = self
            .units
            .into_iter()
            .map(|(id, sock, hw)| {
                let stop = stop.clone();
                let on_peer = on_peer.clone();
                thread::Builder::new()
                    .name(format!("chassis-{id}"))
                    .spawn(move || serve(&sock, &hw, &stop, POLL, |peer| on_peer(id, peer)))
            })
            .collect::<Result<_, _>>()?;
        let mut stats = Vec::with_capacity(workers.len());
        for w in workers {
            stats.push(w.join().map_err(|_| io::Error::other("server worker panicked"))??);
        }
        Ok(stats)
    }
}
