// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Discrete-event engine with integer-picosecond time.
//!
//! Events are ordered by `(due, target, kind, insertion seq)`. Idle spans are
//! skipped in one step; nothing iterates over samples between events.
//! Datagrams from other threads enter through a [`Mailbox`] that the engine
//! drains before every event.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::sync::{Arc, Mutex};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    /// One DAC sample at 2 GS/s.
    pub const DAC_PERIOD: SimTime = SimTime(500);
    /// One ADC sample at 1 GS/s.
    pub const ADC_PERIOD: SimTime = SimTime(1_000);
    /// One backplane FSM clock at 250 MHz.
    pub const FSM_TICK: SimTime = SimTime(4_000);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * 1_000)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000_000)
    }

    /// Rounds to the nearest picosecond; negative inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e12).round().max(0.0) as u64)
    }

    pub const fn ps(self) -> u64 {
        self.0
    }

    pub fn as_ns_f64(self) -> f64 {
        self.0 as f64 * 1e-3
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-12
    }

    /// Smallest multiple of `period` that is `>= self`.
    pub fn ceil_to(self, period: SimTime) -> SimTime {
        let p = period.0.max(1);
        SimTime(self.0.div_ceil(p) * p)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps", self.0)
    }
}

/// Addressable block inside one chassis. 0 is the backplane, 1..=14 are slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub u16);

impl BlockId {
    pub const BACKPLANE: BlockId = BlockId(0);
    pub const HOST: BlockId = BlockId(0xFF);

    pub const fn slot(slot: u8) -> BlockId {
        BlockId(slot as u16)
    }
}

/// Declaration order is the tie-break order for events due at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    FeedbackResult,
    SampleWindowEnd,
    WaveEnd,
    TriggerDelivery,
    WaveStart,
    SampleWindowStart,
    DatagramDelivery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub due: SimTime,
    pub target: BlockId,
    pub kind: EventKind,
    pub payload: Vec<u8>,
}

impl Event {
    pub fn new(due: SimTime, target: BlockId, kind: EventKind) -> Self {
        Event {
            due,
            target,
            kind,
            payload: Vec::new(),
        }
    }

    pub fn with_payload(mut self, payload: Vec<u8>) -> Self {
        self.payload = payload;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimebaseError {
    #[error("event due at {due} is before current time {now}")]
    PastDue { due: SimTime, now: SimTime },
}

#[derive(Debug, PartialEq, Eq)]
struct Queued {
    due: SimTime,
    target: BlockId,
    kind: EventKind,
    seq: u64,
    payload: Vec<u8>,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.due, self.target, self.kind, self.seq).cmp(&(other.due, other.target, other.kind, other.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Thread-safe ingress queue. Posted messages become `DatagramDelivery`
/// events at the engine's current time when it next reaches an event boundary.
#[derive(Debug, Clone, Default)]
pub struct Mailbox {
    inner: Arc<Mutex<VecDeque<(BlockId, Vec<u8>)>>>,
}

impl Mailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&self, target: BlockId, bytes: Vec<u8>) {
        self.inner.lock().expect("mailbox poisoned").push_back((target, bytes));
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("mailbox poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn drain(&self) -> Vec<(BlockId, Vec<u8>)> {
        self.inner.lock().expect("mailbox poisoned").drain(..).collect()
    }
}

/// One delivered event as recorded by the delivery log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub id: EventId,
    pub due: SimTime,
    pub target: BlockId,
    pub kind: EventKind,
    pub payload: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct Engine {
    now: SimTime,
    queue: BinaryHeap<Reverse<Queued>>,
    next_seq: u64,
    delivered: u64,
    log: Option<Vec<LogRecord>>,
    mailbox: Option<Mailbox>,
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn next_due(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(q)| q.due)
    }

    pub fn delivered_total(&self) -> u64 {
        self.delivered
    }

    pub fn attach_mailbox(&mut self, mailbox: Mailbox) {
        self.mailbox = Some(mailbox);
    }

    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn log(&self) -> &[LogRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    /// Canonical byte serialization of the delivery log.
    pub fn log_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in self.log() {
            out.extend_from_slice(&r.id.0.to_be_bytes());
            out.extend_from_slice(&r.due.ps().to_be_bytes());
            out.extend_from_slice(&r.target.0.to_be_bytes());
            out.push(r.kind as u8);
            out.extend_from_slice(&(r.payload.len() as u32).to_be_bytes());
            out.extend_from_slice(&r.payload);
        }
        out
    }

    pub fn schedule(&mut self, e: Event) -> Result<EventId, TimebaseError> {
        if e.due < self.now {
            return Err(TimebaseError::PastDue {
                due: e.due,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued {
            due: e.due,
            target: e.target,
            kind: e.kind,
            seq,
            payload: e.payload,
        }));
        Ok(EventId(seq))
    }

    /// Removes every queued event for which `pred` holds.
    pub fn cancel_where(&mut self, mut pred: impl FnMut(&Event) -> bool) -> usize {
        let before = self.queue.len();
        let kept: Vec<_> = std::mem::take(&mut self.queue)
            .into_vec()
            .into_iter()
            .filter(|Reverse(q)| {
                let e = Event {
                    due: q.due,
                    target: q.target,
                    kind: q.kind,
                    payload: q.payload.clone(),
                };
                !pred(&e)
            })
            .collect();
        self.queue = BinaryHeap::from(kept);
        before - self.queue.len()
    }

    fn drain_mailbox(&mut self) {
        if let Some(mb) = &self.mailbox {
            let posted = mb.drain();
            for (target, bytes) in posted {
                let e = Event::new(self.now, target, EventKind::DatagramDelivery).with_payload(bytes);
                self.schedule(e).expect("mailbox events are due now");
            }
        }
    }

    /// Delivers every event with `due <= t` in order, then sets `now = t`.
    /// The handler may schedule further events, including ones due before `t`.
    pub fn run_until<F>(&mut self, t: SimTime, mut handler: F) -> usize
    where
        F: FnMut(&mut Engine, EventId, Event),
    {
        let t = t.max(self.now);
        let mut count = 0;
        loop {
            self.drain_mailbox();
            let due = match self.queue.peek() {
                Some(Reverse(q)) if q.due <= t => q.due,
                _ => break,
            };
            let Reverse(q) = self.queue.pop().expect("peeked");
            debug_assert!(due >= self.now);
            self.now = due;
            let id = EventId(q.seq);
            if let Some(log) = &mut self.log {
                log.push(LogRecord {
                    id,
                    due: q.due,
                    target: q.target,
                    kind: q.kind,
                    payload: q.payload.clone(),
                });
            }
            self.delivered += 1;
            count += 1;
            handler(
                self,
                id,
                Event {
                    due: q.due,
                    target: q.target,
                    kind: q.kind,
                    payload: q.payload,
                },
            );
        }
        self.now = t;
        count
    }

    /// Runs until the queue is empty or `limit` is reached; returns events delivered.
    pub fn run_to_idle<F>(&mut self, limit: SimTime, mut handler: F) -> usize
    where
        F: FnMut(&mut Engine, EventId, Event),
    {
        let mut count = 0;
        while let Some(due) = self.next_due() {
            if due > limit {
                break;
            }
            count += self.run_until(due, &mut handler);
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(engine: &mut Engine, t: SimTime) -> Vec<Event> {
        let mut seen = Vec::new();
        engine.run_until(t, |_, _, e| seen.push(e));
        seen
    }

    #[test]
    fn zero_delay_event_is_delivered_without_advancing() {
        let mut e = Engine::new();
        e.schedule(Event::new(SimTime::ZERO, BlockId(1), EventKind::WaveStart))
            .unwrap();
        let seen = collect(&mut e, SimTime::ZERO);
        assert_eq!(seen.len(), 1);
        assert_eq!(e.now(), SimTime::ZERO);
    }

    #[test]
    fn equal_due_ties_follow_target_then_kind_then_insertion() {
        let mut e = Engine::new();
        let t = SimTime::from_ps(1000);
        e.schedule(Event::new(t, BlockId(2), EventKind::WaveStart)).unwrap();
        e.schedule(Event::new(t, BlockId(1), EventKind::WaveStart).with_payload(vec![1]))
            .unwrap();
        e.schedule(Event::new(t, BlockId(1), EventKind::WaveStart).with_payload(vec![2]))
            .unwrap();
        e.schedule(Event::new(t, BlockId(1), EventKind::FeedbackResult))
            .unwrap();
        let seen = collect(&mut e, t);
        let order: Vec<_> = seen.iter().map(|e| (e.target.0, e.kind, e.payload.clone())).collect();
        assert_eq!(
            order,
            vec![
                (1, EventKind::FeedbackResult, vec![]),
                (1, EventKind::WaveStart, vec![1]),
                (1, EventKind::WaveStart, vec![2]),
                (2, EventKind::WaveStart, vec![]),
            ]
        );
    }

    #[test]
    fn feedback_event_lands_at_180_ns() {
        let mut e = Engine::new();
        e.schedule(Event::new(
            SimTime::from_ps(180_000),
            BlockId::BACKPLANE,
            EventKind::FeedbackResult,
        ))
        .unwrap();
        let mut at = None;
        e.run_until(SimTime::from_us(1), |eng, _, _| at = Some(eng.now()));
        assert_eq!(at, Some(SimTime::from_ns(180)));
    }

    #[test]
    fn past_due_is_rejected() {
        let mut e = Engine::new();
        e.run_until(SimTime::from_ns(10), |_, _, _| {});
        let err = e
            .schedule(Event::new(SimTime::from_ns(9), BlockId(1), EventKind::WaveEnd))
            .unwrap_err();
        assert_eq!(
            err,
            TimebaseError::PastDue {
                due: SimTime::from_ns(9),
                now: SimTime::from_ns(10)
            }
        );
    }

    #[test]
    fn empty_queue_skips_to_target() {
        let mut e = Engine::new();
        assert_eq!(e.run_until(SimTime::from_ps(1_000_000_000), |_, _, _| {}), 0);
        assert_eq!(e.now().ps(), 1_000_000_000);
    }

    #[test]
    fn run_until_is_inclusive() {
        let mut e = Engine::new();
        for us in 1..=3 {
            e.schedule(Event::new(SimTime::from_us(us), BlockId(1), EventKind::WaveStart))
                .unwrap();
        }
        assert_eq!(e.run_until(SimTime::from_us(2), |_, _, _| {}), 2);
        assert_eq!(e.pending(), 1);
    }

    #[test]
    fn long_idle_gap_costs_one_step() {
        let mut e = Engine::new();
        e.schedule(Event::new(SimTime::ZERO, BlockId(1), EventKind::WaveStart))
            .unwrap();
        e.schedule(Event::new(
            SimTime::from_ps(128_700_000),
            BlockId(4),
            EventKind::SampleWindowStart,
        ))
        .unwrap();
        let start = std::time::Instant::now();
        let n = e.run_until(SimTime::from_ps(1_000_000_000_000), |_, _, _| {});
        assert_eq!(n, 2);
        assert!(start.elapsed() < std::time::Duration::from_millis(50));
    }

    #[test]
    fn handler_can_chain_events() {
        let mut e = Engine::new();
        e.schedule(Event::new(SimTime::ZERO, BlockId(1), EventKind::WaveStart))
            .unwrap();
        let mut times = Vec::new();
        e.run_until(SimTime::from_ns(100), |eng, _, ev| {
            times.push(ev.due);
            if ev.due < SimTime::from_ns(40) {
                let next = ev.due + SimTime::from_ns(10);
                eng.schedule(Event::new(next, BlockId(1), EventKind::WaveStart))
                    .unwrap();
            }
        });
        assert_eq!(times.len(), 5);
        assert_eq!(times[4], SimTime::from_ns(40));
    }

    #[test]
    fn mailbox_posts_arrive_as_datagrams_at_boundaries() {
        let mut e = Engine::new();
        let mb = Mailbox::new();
        e.attach_mailbox(mb.clone());
        e.schedule(Event::new(SimTime::from_ns(5), BlockId(1), EventKind::WaveStart))
            .unwrap();
        mb.post(BlockId(3), vec![9, 9]);
        let seen = collect(&mut e, SimTime::from_ns(10));
        assert_eq!(seen[0].kind, EventKind::DatagramDelivery);
        assert_eq!(seen[0].due, SimTime::ZERO);
        assert_eq!(seen[0].payload, vec![9, 9]);
        assert_eq!(seen[1].kind, EventKind::WaveStart);
        assert!(mb.is_empty());
    }

    #[test]
    fn identical_scripts_give_identical_logs() {
        let run = || {
            let mut e = Engine::new();
            e.enable_log();
            for k in 0..50u64 {
                let due = SimTime::from_ns((k * 7919) % 101);
                e.schedule(
                    Event::new(due, BlockId((k % 3) as u16), EventKind::TriggerDelivery).with_payload(vec![k as u8]),
                )
                .unwrap();
            }
            e.run_until(SimTime::from_us(1), |_, _, _| {});
            e.log_bytes()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn ceil_to_grid() {
        assert_eq!(
            SimTime::from_ps(4001).ceil_to(SimTime::FSM_TICK),
            SimTime::from_ps(8000)
        );
        assert_eq!(
            SimTime::from_ps(8000).ceil_to(SimTime::FSM_TICK),
            SimTime::from_ps(8000)
        );
        assert_eq!(SimTime::ZERO.ceil_to(SimTime::FSM_TICK), SimTime::ZERO);
    }

    #[test]
    fn cancel_removes_matching() {
        let mut e = Engine::new();
        e.schedule(Event::new(SimTime::from_ns(1), BlockId(1), EventKind::WaveEnd))
            .unwrap();
        e.schedule(Event::new(SimTime::from_ns(2), BlockId(2), EventKind::WaveEnd))
            .unwrap();
        assert_eq!(e.cancel_where(|ev| ev.target == BlockId(1)), 1);
        let seen = collect(&mut e, SimTime::from_ns(5));
        assert_eq!(seen.len(), 1);
        assert_eq!(seen[0].target, BlockId(2));
    }
}
