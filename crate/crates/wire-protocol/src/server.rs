// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! UDP endpoint: one socket per chassis, one frame at a time.

use std::collections::HashSet;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::client::Endpoint;
use super::frame::MAX_FRAME;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub received: u64,
    pub answered: u64,
    pub oversized: u64,
}

/// Answers datagrams on `socket` until `stop` is set. The flag is polled
/// every `poll`; `on_new_peer` sees each client address once.
pub fn serve<E: Endpoint + ?Sized>(
    socket: &UdpSocket,
    endpoint: &Arc<Mutex<E>>,
    stop: &AtomicBool,
    poll: Duration,
    mut on_new_peer: impl FnMut(SocketAddr),
) -> io::Result<ServeStats> {
    let mut peers = HashSet::new();
    socket.set_read_timeout(Some(poll))?;
    let mut buf = vec![0u8; MAX_FRAME + 1];
    let mut stats = ServeStats::default();
    while !stop.load(Ordering::Relaxed) {
        let (n, peer) = match socket.recv_from(&mut buf) {
            Ok(x) => x,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => continue,
            Err(e) => return Err(e),
        };
        stats.received += 1;
        if peers.insert(peer) {
            on_new_peer(peer);
        }
        if n > MAX_FRAME {
            stats.oversized += 1;
            continue;
        }
        let resp = endpoint
            .lock()
            .map_err(|_| io::Error::other("endpoint lock poisoned"))?
            .handle_datagram(&buf[..n]);
        if let Some(r) = resp {
            socket.send_to(&r, peer)?;
            stats.answered += 1;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{Client, Udp};
    use crate::frame::Frame;
    use std::thread;

    struct Echo;

    impl Endpoint for Echo {
        fn handle_datagram(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
            let f = Frame::decode(bytes).ok()?;
            f.ack(f.payload.clone()).encode().ok()
        }
    }

    #[test]
    fn udp_round_trip() {
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        let addr = sock.local_addr().unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let s2 = stop.clone();
        let ep = Arc::new(Mutex::new(Echo));
        let h = thread::spawn(move || serve(&sock, &ep, &s2, Duration::from_millis(10), |_| {}).unwrap());
        let mut c = Client::new(Udp::connect(addr).unwrap(), 1, 1);
        assert_eq!(c.ping(b"hello").unwrap(), b"hello");
        stop.store(true, Ordering::Relaxed);
        let st = h.join().unwrap();
        assert_eq!((st.received, st.answered), (1, 1));
    }
}
