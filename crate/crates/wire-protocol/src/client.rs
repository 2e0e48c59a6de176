// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Host SDK: transports and a client with pipelining, retries and
//! seq-matched responses.

use std::collections::{BTreeSet, VecDeque};
use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::frame::{Frame, FrameError, MAX_FRAME};
use super::payload::{
    decode_demod_page, IdentifyInfo, RawPage, ReadDemod, ReadRaw, SetDemod, SetMixerCorrection, SetThreshold, Start,
    StatusReport, WaveAck, WritePlaylist, WriteTrigTable, WriteWave, DEMOD_PAGE_MAX, RAW_PAGE_MAX,
};
use super::{Opcode, PayloadError, Status};
use m2cs_awg::PlaylistEntry;
use m2cs_daq::{IQResult, Threshold};
use m2cs_mixer::MixerCorrection;

/// Anything that answers request datagrams.
pub trait Endpoint: Send {
    fn handle_datagram(&mut self, bytes: &[u8]) -> Option<Vec<u8>>;
}

pub trait Transport {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()>;
    /// Next datagram, or `None` once `timeout` passes without one.
    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        (**self).send(datagram)
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        (**self).recv(timeout)
    }
}

/// Calls an endpoint directly; responses are queued until received.
pub struct InProcess<E: ?Sized> {
    endpoint: Arc<Mutex<E>>,
    inbox: VecDeque<Vec<u8>>,
}

impl<E: Endpoint + ?Sized> InProcess<E> {
    pub fn new(endpoint: Arc<Mutex<E>>) -> Self {
        InProcess {
            endpoint,
            inbox: VecDeque::new(),
        }
    }
}

impl<E: Endpoint + ?Sized> Transport for InProcess<E> {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        let resp = self
            .endpoint
            .lock()
            .map_err(|_| io::Error::other("endpoint lock poisoned"))?
            .handle_datagram(datagram);
        self.inbox.extend(resp);
        Ok(())
    }

    fn recv(&mut self, _timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        Ok(self.inbox.pop_front())
    }
}

pub struct Udp {
    socket: UdpSocket,
    buf: Vec<u8>,
}

impl Udp {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let addr: SocketAddr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        let bind: SocketAddr = if addr.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }
            .parse()
            .expect("literal");
        let socket = UdpSocket::bind(bind)?;
        socket.connect(addr)?;
        Ok(Udp {
            socket,
            buf: vec![0; MAX_FRAME + 64],
        })
    }
}

impl Transport for Udp {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        self.socket.send(datagram).map(|_| ())
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        self.socket
            .set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        match self.socket.recv(&mut self.buf) {
            Ok(n) => Ok(Some(self.buf[..n].to_vec())),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            // A previous datagram bounced off a closed port.
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Drops each datagram in either direction with probability `p`.
pub struct Lossy<T> {
    inner: T,
    p: f64,
    rng: ChaCha8Rng,
    pub dropped: u64,
}

impl<T: Transport> Lossy<T> {
    pub fn new(inner: T, p: f64, seed: u64) -> Self {
        Lossy {
            inner,
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
            dropped: 0,
        }
    }
}

impl<T: Transport> Transport for Lossy<T> {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        if self.rng.gen::<f64>() < self.p {
            self.dropped += 1;
            return Ok(());
        }
        self.inner.send(datagram)
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        loop {
            match self.inner.recv(timeout)? {
                Some(_) if self.rng.gen::<f64>() < self.p => self.dropped += 1,
                r => return Ok(r),
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("request {seq} unanswered after {attempts} attempts")]
    Timeout { seq: u32, attempts: u32 },
    #[error("NACK {}: {message}", status.map_or_else(|| format!("{code:#06x}"), |s| format!("{s:?}")))]
    Nack {
        code: u16,
        status: Option<Status>,
        message: String,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
}

impl ClientError {
    pub fn status(&self) -> Option<Status> {
        match self {
            ClientError::Nack { status, .. } => *status,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub requests: u64,
    pub datagrams_sent: u64,
    pub retransmissions: u64,
}

/// One request of a pipelined batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub slot: u8,
    pub opcode: Opcode,
    pub payload: Vec<u8>,
}

impl Request {
    pub fn new(slot: u8, opcode: Opcode, payload: Vec<u8>) -> Self {
        Request { slot, opcode, payload }
    }
}

pub const DEFAULT_WINDOW: usize = 64;
pub const DEFAULT_ATTEMPTS: u32 = 10;

pub struct Client<T> {
    transport: T,
    chassis: u8,
    next_seq: u32,
    window: usize,
    attempts: u32,
    timeout: Duration,
    stats: ClientStats,
}

impl<T: Transport> Client<T> {
    /// Client for `chassis` whose first request uses `first_seq`.
    pub fn new(transport: T, chassis: u8, first_seq: u32) -> Self {
        Client {
            transport,
            chassis,
            next_seq: first_seq,
            window: DEFAULT_WINDOW,
            attempts: DEFAULT_ATTEMPTS,
            timeout: Duration::from_millis(200),
            stats: ClientStats::default(),
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window.max(1);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_attempts(mut self, attempts: u32) -> Self {
        self.attempts = attempts.max(1);
        self
    }

    pub fn chassis(&self) -> u8 {
        self.chassis
    }

    pub fn set_chassis(&mut self, chassis: u8) {
        self.chassis = chassis;
    }

    pub fn stats(&self) -> ClientStats {
        self.stats
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Sends `reqs` with at most `window` in flight and returns the ACK
    /// payloads in request order. Unanswered requests are resent with the
    /// same seq; an out-of-order chunk NACK is retried like a loss.
    pub fn batch(&mut self, reqs: &[Request]) -> Result<Vec<Vec<u8>>, ClientError> {
        let n = reqs.len();
        let base = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(n as u32);
        self.stats.requests += n as u64;
        let frames: Vec<Vec<u8>> = reqs
            .iter()
            .enumerate()
            .map(|(k, r)| {
                Frame::request(
                    base.wrapping_add(k as u32),
                    self.chassis,
                    r.slot,
                    r.opcode.code(),
                    r.payload.clone(),
                )
                .encode()
            })
            .collect::<Result<_, _>>()?;
        let mut results: Vec<Option<Vec<u8>>> = vec![None; n];
        let mut tries = vec![0u32; n];
        let mut outstanding = BTreeSet::new();
        let mut deferred = BTreeSet::new();
        let mut next = 0;
        loop {
            while outstanding.len() < self.window && next < n {
                self.transport.send(&frames[next])?;
                self.stats.datagrams_sent += 1;
                tries[next] = 1;
                outstanding.insert(next);
                next += 1;
            }
            if outstanding.is_empty() {
                break;
            }
            let got = if deferred.len() == outstanding.len() {
                None
            } else {
                self.transport.recv(self.timeout)?
            };
            match got {
                Some(bytes) => {
                    let Ok(f) = Frame::decode(&bytes) else { continue };
                    let k = f.seq.wrapping_sub(base) as usize;
                    if !f.is_response() || k >= n || !outstanding.contains(&k) {
                        continue;
                    }
                    match f.nack_status() {
                        None => {
                            results[k] = Some(f.payload);
                            outstanding.remove(&k);
                            deferred.remove(&k);
                        }
                        Some((code, _)) if code == Status::OutOfOrderChunk.code() => {
                            deferred.insert(k);
                        }
                        Some((code, message)) => {
                            return Err(ClientError::Nack {
                                code,
                                status: Status::from_code(code),
                                message,
                            });
                        }
                    }
                }
                None => {
                    for &k in &outstanding {
                        if tries[k] >= self.attempts {
                            return Err(ClientError::Timeout {
                                seq: base.wrapping_add(k as u32),
                                attempts: tries[k],
                            });
                        }
                        tries[k] += 1;
                        self.transport.send(&frames[k])?;
                        self.stats.datagrams_sent += 1;
                        self.stats.retransmissions += 1;
                    }
                    deferred.clear();
                }
            }
        }
        Ok(results.into_iter().map(|r| r.expect("all answered")).collect())
    }

    pub fn request(&mut self, slot: u8, opcode: Opcode, payload: Vec<u8>) -> Result<Vec<u8>, ClientError> {
        Ok(self
            .batch(&[Request::new(slot, opcode, payload)])?
            .pop()
            .expect("one response"))
    }

    pub fn ping(&mut self, payload: &[u8]) -> Result<Vec<u8>, ClientError> {
        self.request(0, Opcode::Ping, payload.to_vec())
    }

    pub fn identify(&mut self) -> Result<IdentifyInfo, ClientError> {
        Ok(IdentifyInfo::decode(&self.request(0, Opcode::Identify, Vec::new())?)?)
    }

    pub fn status(&mut self, slot: u8) -> Result<StatusReport, ClientError> {
        Ok(StatusReport::decode(&self.request(
            slot,
            Opcode::ReadStatus,
            Vec::new(),
        )?)?)
    }

    /// Uploads a whole segment in 700-sample chunks.
    pub fn write_wave(
        &mut self,
        slot: u8,
        channel: u8,
        segment_id: u16,
        samples: &[i16],
    ) -> Result<WaveAck, ClientError> {
        let reqs = WriteWave::chunks(channel, segment_id, samples)
            .iter()
            .map(|c| Ok(Request::new(slot, Opcode::WriteWave, c.encode()?)))
            .collect::<Result<Vec<_>, PayloadError>>()?;
        let acks = self.batch(&reqs)?;
        Ok(WaveAck::decode(acks.last().expect("at least one chunk"))?)
    }

    pub fn write_playlist(&mut self, slot: u8, entries: &[PlaylistEntry]) -> Result<(), ClientError> {
        let p = WritePlaylist {
            entries: entries.to_vec(),
        }
        .encode()?;
        self.request(slot, Opcode::WritePlaylist, p).map(drop)
    }

    pub fn write_trig_table(&mut self, table: &WriteTrigTable) -> Result<(), ClientError> {
        self.request(0, Opcode::WriteTrigTable, table.encode()?).map(drop)
    }

    pub fn set_demod(&mut self, slot: u8, s: SetDemod) -> Result<(), ClientError> {
        self.request(slot, Opcode::SetDemod, s.encode()).map(drop)
    }

    pub fn set_threshold(&mut self, slot: u8, channel: u8, threshold: Threshold) -> Result<(), ClientError> {
        self.request(slot, Opcode::SetThreshold, SetThreshold { channel, threshold }.encode())
            .map(drop)
    }

    pub fn set_mixer_correction(&mut self, slot: u8, pair: u8, correction: MixerCorrection) -> Result<(), ClientError> {
        self.request(
            slot,
            Opcode::SetMixerCorrection,
            SetMixerCorrection { pair, correction }.encode(),
        )
        .map(drop)
    }

    pub fn start(&mut self, shots: u32, period_ns: u32) -> Result<(), ClientError> {
        self.request(0, Opcode::Start, Start { shots, period_ns }.encode())
            .map(drop)
    }

    pub fn stop(&mut self) -> Result<(), ClientError> {
        self.request(0, Opcode::Stop, Vec::new()).map(drop)
    }

    pub fn read_demod(&mut self, slot: u8, after: u32, max: u16) -> Result<Vec<IQResult>, ClientError> {
        Ok(decode_demod_page(&self.request(
            slot,
            Opcode::ReadDemod,
            ReadDemod { after, max }.encode(),
        )?)?)
    }

    /// Every stored result of the DAQ in `slot`, fetched in pipelined pages.
    pub fn read_demod_all(&mut self, slot: u8) -> Result<Vec<IQResult>, ClientError> {
        let total = self.status(slot)?.results as usize;
        let reqs: Vec<Request> = (0..total)
            .step_by(DEMOD_PAGE_MAX)
            .map(|after| {
                let p = ReadDemod {
                    after: after as u32,
                    max: DEMOD_PAGE_MAX as u16,
                }
                .encode();
                Request::new(slot, Opcode::ReadDemod, p)
            })
            .collect();
        let mut out = Vec::with_capacity(total);
        for page in self.batch(&reqs)? {
            out.extend(decode_demod_page(&page)?);
        }
        Ok(out)
    }

    pub fn read_raw(&mut self, slot: u8, input: u8, offset: u32, max: u16) -> Result<RawPage, ClientError> {
        Ok(RawPage::decode(&self.request(
            slot,
            Opcode::ReadRaw,
            ReadRaw { input, offset, max }.encode(),
        )?)?)
    }

    /// Raw samples `offset .. offset + len` of one input (clipped to what is stored).
    pub fn read_raw_range(&mut self, slot: u8, input: u8, offset: u32, len: u32) -> Result<Vec<(i8, i8)>, ClientError> {
        let first = self.read_raw(slot, input, offset, 0)?;
        let end = first.total.min(offset.saturating_add(len));
        let reqs: Vec<Request> = (offset..end)
            .step_by(RAW_PAGE_MAX)
            .map(|o| {
                let max = (end - o).min(RAW_PAGE_MAX as u32) as u16;
                Request::new(slot, Opcode::ReadRaw, ReadRaw { input, offset: o, max }.encode())
            })
            .collect();
        let mut out = Vec::with_capacity((end.saturating_sub(offset)) as usize);
        for page in self.batch(&reqs)? {
            out.extend(RawPage::decode(&page)?.samples);
        }
        Ok(out)
    }
}
