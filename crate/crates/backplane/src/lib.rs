// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Chassis controller: module registry and clock assignment, the level-2
//! trigger FSM over 36-bit instructions, feedback latching and datagram
//! switching.

pub mod chassis;
pub mod dut;

use std::collections::BTreeMap;

use thiserror::Error;

use m2cs_daq::FeedbackBits;
use m2cs_protocol::{Frame, FrameError};
use m2cs_timebase::{BlockId, Event, EventKind, SimTime};

pub const SLOTS: u8 = 14;
pub const MAX_CHILDREN: usize = 11;
pub const BACKPLANE_LATENCY_NS: u64 = 24;
pub const CABLE_NS: u64 = 18;
pub const FORWARD_NS: u64 = 40;
/// Serialization charge on the internal 1 Gb/s hop.
pub const SERIALIZE_PS_PER_BYTE: u64 = 12_000;

/// Level-2 trigger codes carried to modules in a `TriggerDelivery` payload.
pub const CODE_START: u8 = 0x1;
pub const CODE_STOP: u8 = 0x2;
pub const CODE_BRANCH0: u8 = 0x4;
pub const CODE_BRANCH1: u8 = 0x5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TriggerType {
    Start = 0x1,
    Stop = 0x2,
    Branch = 0x4,
    Feedback = 0x8,
}

impl TriggerType {
    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0x1 => Some(TriggerType::Start),
            0x2 => Some(TriggerType::Stop),
            0x4 => Some(TriggerType::Branch),
            0x8 => Some(TriggerType::Feedback),
            _ => None,
        }
    }
}

/// Bits 3:0 type, bits 35:4 timestamp in 4 ns FSM ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriggerInstruction(u64);

impl TriggerInstruction {
    pub const MASK: u64 = (1 << 36) - 1;

    pub fn new(ty: TriggerType, tick: u32) -> Self {
        TriggerInstruction((tick as u64) << 4 | ty as u64)
    }

    pub fn from_raw(raw: u64) -> Result<Self, BackplaneError> {
        if raw & !Self::MASK != 0 || TriggerType::from_code((raw & 0xF) as u8).is_none() {
            return Err(BackplaneError::BadInstruction(raw));
        }
        Ok(TriggerInstruction(raw))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn ty(self) -> TriggerType {
        TriggerType::from_code((self.0 & 0xF) as u8).expect("validated on construction")
    }

    pub fn tick(self) -> u32 {
        (self.0 >> 4) as u32
    }

    pub fn offset(self) -> SimTime {
        SimTime::from_ps(self.tick() as u64 * SimTime::FSM_TICK.ps())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeedbackSource {
    pub daq_slot: u8,
    pub channel: u8,
}

/// Per-slot instruction list with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TriggerTable {
    instructions: Vec<TriggerInstruction>,
    feedback: Option<FeedbackSource>,
}

impl TriggerTable {
    pub fn new(
        instructions: Vec<TriggerInstruction>,
        feedback: Option<FeedbackSource>,
    ) -> Result<Self, BackplaneError> {
        let mut t = TriggerTable {
            instructions: Vec::new(),
            feedback,
        };
        t.extend(instructions)?;
        Ok(t)
    }

    pub fn extend(&mut self, more: Vec<TriggerInstruction>) -> Result<(), BackplaneError> {
        let mut last = self.instructions.last().map(|i| i.tick());
        for i in &more {
            if last.is_some_and(|l| i.tick() <= l) {
                return Err(BackplaneError::UnsortedTable { tick: i.tick() });
            }
            if i.ty() == TriggerType::Feedback && self.feedback.is_none() {
                return Err(BackplaneError::NoFeedbackSource);
            }
            last = Some(i.tick());
        }
        self.instructions.extend(more);
        Ok(())
    }

    pub fn instructions(&self) -> &[TriggerInstruction] {
        &self.instructions
    }

    pub fn feedback(&self) -> Option<FeedbackSource> {
        self.feedback
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModuleKind {
    Awg,
    Daq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockAssignment {
    pub slot: u8,
    pub rate_hz: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChassisRole {
    Master,
    Slave1,
    Slave2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChassisTopology {
    pub role: ChassisRole,
    pub children: Vec<u8>,
}

impl ChassisTopology {
    pub fn standalone() -> Self {
        ChassisTopology {
            role: ChassisRole::Master,
            children: Vec::new(),
        }
    }

    pub fn new(role: ChassisRole, children: Vec<u8>) -> Result<Self, BackplaneError> {
        if children.len() > MAX_CHILDREN {
            return Err(BackplaneError::TooManyChildren(children.len()));
        }
        if role == ChassisRole::Slave2 && !children.is_empty() {
            return Err(BackplaneError::TooManyChildren(children.len()));
        }
        Ok(ChassisTopology { role, children })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Backplane,
    Module(u8),
    Child(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub destination: Destination,
    pub latency: SimTime,
}

/// One level-2 trigger sent to a module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Emission {
    pub executed_at: SimTime,
    pub slot: u8,
    pub code: u8,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackplaneError {
    #[error("slot {0} is occupied")]
    SlotOccupied(u8),
    #[error("slot {0} does not exist")]
    BadSlot(u8),
    #[error("no module in slot {0}")]
    UnknownSlot(u8),
    #[error("chassis {0} is not reachable from here")]
    UnknownChassis(u8),
    #[error("trigger FSM is not armed")]
    NotArmed,
    #[error("no feedback result from slot {daq_slot} channel {channel} by tick {tick}")]
    FeedbackUnavailable { daq_slot: u8, channel: u8, tick: u32 },
    #[error("invalid trigger instruction {0:#x}")]
    BadInstruction(u64),
    #[error("timestamps must strictly increase (tick {tick})")]
    UnsortedTable { tick: u32 },
    #[error("FEEDBACK instruction without a feedback source")]
    NoFeedbackSource,
    #[error("{0} child chassis exceed the fan-out limit")]
    TooManyChildren(usize),
    #[error("CRC mismatch")]
    CrcMismatch,
    #[error(transparent)]
    BadFrame(FrameError),
}

impl From<FrameError> for BackplaneError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::CrcMismatch => BackplaneError::CrcMismatch,
            e => BackplaneError::BadFrame(e),
        }
    }
}

const TAG_FSM: u8 = 0xF5;

#[derive(Debug, Clone)]
pub struct Backplane {
    chassis_id: u8,
    topology: ChassisTopology,
    modules: [Option<ModuleKind>; SLOTS as usize + 1],
    tables: [Option<TriggerTable>; SLOTS as usize + 1],
    armed: bool,
    epoch: SimTime,
    generation: u32,
    latches: BTreeMap<(u8, u8), u8>,
    emissions: Vec<Emission>,
    record: bool,
}

impl Backplane {
    pub fn new(chassis_id: u8, topology: ChassisTopology) -> Self {
        Backplane {
            chassis_id,
            topology,
            modules: Default::default(),
            tables: Default::default(),
            armed: false,
            epoch: SimTime::ZERO,
            generation: 0,
            latches: BTreeMap::new(),
            emissions: Vec::new(),
            record: true,
        }
    }

    pub fn chassis_id(&self) -> u8 {
        self.chassis_id
    }

    pub fn topology(&self) -> &ChassisTopology {
        &self.topology
    }

    fn check_slot(slot: u8) -> Result<usize, BackplaneError> {
        if (1..=SLOTS).contains(&slot) {
            Ok(slot as usize)
        } else {
            Err(BackplaneError::BadSlot(slot))
        }
    }

    pub fn register_module(&mut self, slot: u8, kind: ModuleKind) -> Result<ClockAssignment, BackplaneError> {
        let s = Self::check_slot(slot)?;
        if self.modules[s].is_some() {
            return Err(BackplaneError::SlotOccupied(slot));
        }
        self.modules[s] = Some(kind);
        let rate_hz = match kind {
            ModuleKind::Daq => 1_000_000_000,
            ModuleKind::Awg => 2_000_000_000,
        };
        Ok(ClockAssignment { slot, rate_hz })
    }

    pub fn module(&self, slot: u8) -> Option<ModuleKind> {
        self.modules.get(slot as usize).copied().flatten()
    }

    pub fn set_table(&mut self, slot: u8, table: TriggerTable) -> Result<(), BackplaneError> {
        let s = Self::check_slot(slot)?;
        if self.modules[s].is_none() {
            return Err(BackplaneError::UnknownSlot(slot));
        }
        self.tables[s] = Some(table);
        Ok(())
    }

    pub fn append_table(&mut self, slot: u8, more: Vec<TriggerInstruction>) -> Result<(), BackplaneError> {
        let s = Self::check_slot(slot)?;
        if self.modules[s].is_none() {
            return Err(BackplaneError::UnknownSlot(slot));
        }
        self.tables[s].get_or_insert_with(TriggerTable::default).extend(more)
    }

    pub fn table(&self, slot: u8) -> Option<&TriggerTable> {
        self.tables.get(slot as usize)?.as_ref()
    }

    pub fn clear_tables(&mut self) {
        self.tables = Default::default();
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }

    pub fn epoch(&self) -> SimTime {
        self.epoch
    }

    /// Disarms the FSM; pending instruction events become stale.
    pub fn disarm(&mut self) {
        self.armed = false;
        self.generation = self.generation.wrapping_add(1);
    }

    pub fn set_recording(&mut self, on: bool) {
        self.record = on;
    }

    pub fn emissions(&self) -> &[Emission] {
        &self.emissions
    }

    pub fn clear_emissions(&mut self) {
        self.emissions.clear();
    }

    /// Resets the FSM timer to zero at `at`, clears feedback latches and arms
    /// every table. Returns one backplane event per instruction, due at its
    /// timestamp.
    pub fn level1_trigger(&mut self, at: SimTime) -> Vec<Event> {
        self.generation = self.generation.wrapping_add(1);
        self.epoch = at;
        self.armed = true;
        self.latches.clear();
        let mut out = Vec::new();
        for (slot, t) in self.tables.iter().enumerate() {
            for (idx, ins) in t.iter().flat_map(|t| t.instructions.iter().enumerate()) {
                let mut p = vec![TAG_FSM];
                p.extend_from_slice(&self.generation.to_be_bytes());
                p.push(slot as u8);
                p.extend_from_slice(&(idx as u16).to_be_bytes());
                out.push(Event::new(at + ins.offset(), BlockId::BACKPLANE, EventKind::TriggerDelivery).with_payload(p));
            }
        }
        out
    }

    pub fn latch_feedback(&mut self, fb: &FeedbackBits) {
        for ch in 0..16u8 {
            if let Some(b) = fb.bit(ch) {
                self.latches.insert((fb.daq_slot, ch), b);
            }
        }
    }

    pub fn latched(&self, daq_slot: u8, channel: u8) -> Option<u8> {
        self.latches.get(&(daq_slot, channel)).copied()
    }

    fn execute(
        &mut self,
        slot: u8,
        ins: TriggerInstruction,
        fb: Option<FeedbackSource>,
    ) -> Result<Event, BackplaneError> {
        if !self.armed {
            return Err(BackplaneError::NotArmed);
        }
        let code = match ins.ty() {
            TriggerType::Start => CODE_START,
            TriggerType::Stop => CODE_STOP,
            TriggerType::Branch => CODE_BRANCH0,
            TriggerType::Feedback => {
                let src = fb.ok_or(BackplaneError::NoFeedbackSource)?;
                match self.latched(src.daq_slot, src.channel) {
                    Some(0) => CODE_BRANCH0,
                    Some(_) => CODE_BRANCH1,
                    None => {
                        return Err(BackplaneError::FeedbackUnavailable {
                            daq_slot: src.daq_slot,
                            channel: src.channel,
                            tick: ins.tick(),
                        })
                    }
                }
            }
        };
        let executed_at = self.epoch + ins.offset();
        if self.record {
            self.emissions.push(Emission {
                executed_at,
                slot,
                code,
            });
        }
        let due = executed_at + SimTime::from_ns(BACKPLANE_LATENCY_NS + CABLE_NS);
        Ok(Event::new(due, BlockId::slot(slot), EventKind::TriggerDelivery).with_payload(vec![code]))
    }

    /// Executes every instruction whose timestamp equals `tick`, in slot
    /// order. Stops at the first failing instruction.
    pub fn fsm_step(&mut self, tick: u32) -> Result<Vec<Event>, BackplaneError> {
        if !self.armed {
            return Err(BackplaneError::NotArmed);
        }
        let mut out = Vec::new();
        for slot in 1..=SLOTS {
            let Some(t) = &self.tables[slot as usize] else { continue };
            let fb = t.feedback;
            let hit = t.instructions.iter().find(|i| i.tick() == tick).copied();
            if let Some(ins) = hit {
                out.push(self.execute(slot, ins, fb)?);
            }
        }
        Ok(out)
    }

    /// Applies an engine event addressed to the backplane.
    pub fn handle_event(&mut self, ev: &Event) -> Result<Vec<Event>, BackplaneError> {
        match ev.kind {
            EventKind::FeedbackResult => {
                if let Some(fb) = FeedbackBits::decode(&ev.payload) {
                    if self.armed {
                        self.latch_feedback(&fb);
                    }
                }
                Ok(Vec::new())
            }
            EventKind::TriggerDelivery if ev.payload.len() == 8 && ev.payload[0] == TAG_FSM => {
                let gen = u32::from_be_bytes(ev.payload[1..5].try_into().expect("len checked"));
                if gen != self.generation || !self.armed {
                    return Ok(Vec::new());
                }
                let slot = ev.payload[5];
                let idx = u16::from_be_bytes([ev.payload[6], ev.payload[7]]) as usize;
                let Some(t) = &self.tables[slot as usize] else {
                    return Ok(Vec::new());
                };
                let Some(&ins) = t.instructions.get(idx) else {
                    return Ok(Vec::new());
                };
                let fb = t.feedback;
                Ok(vec![self.execute(slot, ins, fb)?])
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Destination and forwarding latency of an already decoded frame of
    /// `wire_len` bytes.
    pub fn route(&self, frame: &Frame, wire_len: usize) -> Result<Route, BackplaneError> {
        let destination = if frame.chassis == self.chassis_id {
            match frame.slot {
                0 => Destination::Backplane,
                s if self.module(s).is_some() => Destination::Module(s),
                s => return Err(BackplaneError::UnknownSlot(s)),
            }
        } else if self.topology.children.contains(&frame.chassis) {
            Destination::Child(frame.chassis)
        } else {
            return Err(BackplaneError::UnknownChassis(frame.chassis));
        };
        let latency = SimTime::from_ns(FORWARD_NS) + SimTime::from_ps(SERIALIZE_PS_PER_BYTE * wire_len as u64);
        Ok(Route { destination, latency })
    }

    pub fn route_datagram(&self, bytes: &[u8]) -> Result<(Frame, Route), BackplaneError> {
        let f = Frame::decode(bytes)?;
        let r = self.route(&f, bytes.len())?;
        Ok((f, r))
    }
}

/// A master chassis and its first-level slaves, reset together.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub master: Backplane,
    pub slaves: Vec<Backplane>,
}

impl Cluster {
    pub fn new(master_id: u8, slave_ids: &[u8]) -> Result<Self, BackplaneError> {
        let topo = ChassisTopology::new(ChassisRole::Master, slave_ids.to_vec())?;
        let slaves = slave_ids
            .iter()
            .map(|&id| {
                Backplane::new(
                    id,
                    ChassisTopology {
                        role: ChassisRole::Slave1,
                        children: Vec::new(),
                    },
                )
            })
            .collect();
        Ok(Cluster {
            master: Backplane::new(master_id, topo),
            slaves,
        })
    }

    /// Resets every chassis timer at `at` with zero skew.
    pub fn level1_trigger(&mut self, at: SimTime) -> Vec<(u8, Vec<Event>)> {
        std::iter::once(&mut self.master)
            .chain(self.slaves.iter_mut())
            .map(|b| (b.chassis_id, b.level1_trigger(at)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use m2cs_timebase::Engine;

    fn bp() -> Backplane {
        let mut b = Backplane::new(1, ChassisTopology::standalone());
        b.register_module(2, ModuleKind::Awg).unwrap();
        b.register_module(4, ModuleKind::Daq).unwrap();
        b
    }

    #[test]
    fn registry_and_clocks() {
        let mut b = Backplane::new(1, ChassisTopology::standalone());
        assert_eq!(
            b.register_module(3, ModuleKind::Daq),
            Ok(ClockAssignment {
                slot: 3,
                rate_hz: 1_000_000_000
            })
        );
        assert_eq!(
            b.register_module(3, ModuleKind::Awg),
            Err(BackplaneError::SlotOccupied(3))
        );
        assert_eq!(b.register_module(15, ModuleKind::Awg), Err(BackplaneError::BadSlot(15)));
        assert_eq!(b.register_module(0, ModuleKind::Awg), Err(BackplaneError::BadSlot(0)));
        assert_eq!(b.register_module(14, ModuleKind::Awg).unwrap().rate_hz, 2_000_000_000);
    }

    #[test]
    fn instruction_bit_layout() {
        let i = TriggerInstruction::new(TriggerType::Feedback, 0xFFFF_FFFF);
        assert_eq!(i.raw(), 0xF_FFFF_FFF8);
        assert_eq!(TriggerInstruction::from_raw(0x191).unwrap().tick(), 0x19);
        assert_eq!(
            TriggerInstruction::from_raw(0x193),
            Err(BackplaneError::BadInstruction(0x193))
        );
        assert_eq!(
            TriggerInstruction::from_raw(1 << 36 | 1),
            Err(BackplaneError::BadInstruction(1 << 36 | 1))
        );
        assert_eq!(
            TriggerInstruction::new(TriggerType::Start, 25).offset(),
            SimTime::from_ns(100)
        );
    }

    #[test]
    fn tables_must_strictly_increase() {
        let s = |t| TriggerInstruction::new(TriggerType::Start, t);
        assert!(TriggerTable::new(vec![s(1), s(2)], None).is_ok());
        assert_eq!(
            TriggerTable::new(vec![s(2), s(2)], None),
            Err(BackplaneError::UnsortedTable { tick: 2 })
        );
        assert_eq!(
            TriggerTable::new(vec![TriggerInstruction::new(TriggerType::Feedback, 3)], None),
            Err(BackplaneError::NoFeedbackSource)
        );
        let mut b = bp();
        assert_eq!(
            b.set_table(5, TriggerTable::default()),
            Err(BackplaneError::UnknownSlot(5))
        );
        b.append_table(2, vec![s(5)]).unwrap();
        assert_eq!(
            b.append_table(2, vec![s(5)]),
            Err(BackplaneError::UnsortedTable { tick: 5 })
        );
    }

    #[test]
    fn start_reaches_module_after_backplane_and_cable() {
        let mut b = bp();
        b.set_table(
            2,
            TriggerTable::new(vec![TriggerInstruction::new(TriggerType::Start, 25)], None).unwrap(),
        )
        .unwrap();
        assert_eq!(b.fsm_step(25), Err(BackplaneError::NotArmed));
        let fsm = b.level1_trigger(SimTime::from_us(1));
        assert_eq!(fsm.len(), 1);
        assert_eq!(fsm[0].due, SimTime::from_ns(1100));
        let out = b.handle_event(&fsm[0]).unwrap();
        assert_eq!(out[0].due, SimTime::from_ns(1000 + 100 + 24 + 18));
        assert_eq!(
            (out[0].target, out[0].payload.as_slice()),
            (BlockId::slot(2), &[CODE_START][..])
        );
    }

    #[test]
    fn feedback_selects_branch_from_latched_bit() {
        let mut b = bp();
        let fb = Some(FeedbackSource {
            daq_slot: 4,
            channel: 0,
        });
        let t = TriggerTable::new(vec![TriggerInstruction::new(TriggerType::Feedback, 70)], fb).unwrap();
        b.set_table(2, t).unwrap();
        b.level1_trigger(SimTime::ZERO);
        assert_eq!(
            b.fsm_step(70),
            Err(BackplaneError::FeedbackUnavailable {
                daq_slot: 4,
                channel: 0,
                tick: 70
            })
        );
        b.latch_feedback(&FeedbackBits {
            daq_slot: 4,
            mask: 1,
            bits: 1,
        });
        assert_eq!(b.fsm_step(70).unwrap()[0].payload, vec![CODE_BRANCH1]);
        b.latch_feedback(&FeedbackBits {
            daq_slot: 4,
            mask: 1,
            bits: 0,
        });
        assert_eq!(b.fsm_step(70).unwrap()[0].payload, vec![CODE_BRANCH0]);
        b.level1_trigger(SimTime::from_us(1));
        assert_eq!(b.latched(4, 0), None);
    }

    #[test]
    fn retrigger_restarts_tables() {
        let mut b = bp();
        let s = |t| TriggerInstruction::new(TriggerType::Start, t);
        b.set_table(2, TriggerTable::new(vec![s(10), s(20)], None).unwrap())
            .unwrap();
        let mut eng = Engine::new();
        for e in b.level1_trigger(SimTime::ZERO) {
            eng.schedule(e).unwrap();
        }
        let mut delivered = Vec::new();
        eng.run_until(SimTime::from_ns(50), |eng, _, ev| {
            if ev.target == BlockId::BACKPLANE {
                for e in b.handle_event(&ev).unwrap() {
                    eng.schedule(e).unwrap();
                }
            } else {
                delivered.push(ev.due);
            }
        });
        for e in b.level1_trigger(SimTime::from_ns(50)) {
            eng.schedule(e).unwrap();
        }
        eng.run_to_idle(SimTime::from_us(1), |eng, _, ev| {
            if ev.target == BlockId::BACKPLANE {
                for e in b.handle_event(&ev).unwrap() {
                    eng.schedule(e).unwrap();
                }
            } else {
                delivered.push(ev.due);
            }
        });
        // The instruction at tick 20 of the first epoch (80 ns) is superseded.
        let ns: Vec<f64> = delivered.iter().map(|t| t.as_ns_f64()).collect();
        assert_eq!(ns, vec![82.0, 132.0, 172.0]);
    }

    #[test]
    fn identical_tables_and_bits_give_identical_logs() {
        let run = || {
            let mut b = bp();
            let fb = Some(FeedbackSource {
                daq_slot: 4,
                channel: 2,
            });
            let ins = vec![
                TriggerInstruction::new(TriggerType::Start, 0),
                TriggerInstruction::new(TriggerType::Feedback, 40),
                TriggerInstruction::new(TriggerType::Branch, 41),
                TriggerInstruction::new(TriggerType::Stop, 90),
            ];
            b.set_table(2, TriggerTable::new(ins, fb).unwrap()).unwrap();
            for shot in 0..5u64 {
                b.level1_trigger(SimTime::from_us(shot));
                b.latch_feedback(&FeedbackBits {
                    daq_slot: 4,
                    mask: 4,
                    bits: (shot as u16 & 1) << 2,
                });
                for t in [0, 40, 41, 90] {
                    b.fsm_step(t).unwrap();
                }
            }
            b.emissions().to_vec()
        };
        let a = run();
        assert_eq!(a.len(), 20);
        assert_eq!(a, run());
    }

    #[test]
    fn datagram_routing() {
        let b = Backplane::new(1, ChassisTopology::new(ChassisRole::Master, vec![2, 3]).unwrap());
        let mut b2 = b.clone();
        b2.register_module(5, ModuleKind::Daq).unwrap();
        let bytes = |chassis, slot| Frame::request(1, chassis, slot, 1, Vec::new()).encode().unwrap();
        assert_eq!(
            b2.route_datagram(&bytes(1, 0)).unwrap().1.destination,
            Destination::Backplane
        );
        let (_, r) = b2.route_datagram(&bytes(1, 5)).unwrap();
        assert_eq!(
            r,
            Route {
                destination: Destination::Module(5),
                latency: SimTime::from_ns(40 + 12 * 20)
            }
        );
        assert_eq!(
            b2.route_datagram(&bytes(3, 9)).unwrap().1.destination,
            Destination::Child(3)
        );
        assert_eq!(b2.route_datagram(&bytes(1, 6)), Err(BackplaneError::UnknownSlot(6)));
        assert_eq!(b2.route_datagram(&bytes(7, 0)), Err(BackplaneError::UnknownChassis(7)));
        let mut bad = bytes(1, 0);
        bad[6] ^= 1;
        assert_eq!(b2.route_datagram(&bad), Err(BackplaneError::CrcMismatch));
    }

    #[test]
    fn cluster_fan_out() {
        let ids: Vec<u8> = (2..=12).collect();
        let mut c = Cluster::new(1, &ids).unwrap();
        let resets = c.level1_trigger(SimTime::from_us(2));
        assert_eq!(resets.len(), 12);
        assert!(c
            .slaves
            .iter()
            .chain([&c.master])
            .all(|b| b.is_armed() && b.epoch() == SimTime::from_us(2)));
        assert_eq!(
            Cluster::new(1, &(2..=13).collect::<Vec<_>>()).err(),
            Some(BackplaneError::TooManyChildren(12))
        );
    }
}
