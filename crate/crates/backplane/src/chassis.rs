// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! One chassis: backplane, module bay, the device under test, and the
//! command handler that sits behind the wire protocol.
//!
//! Datagram forwarding time is accumulated on a separate link clock. The
//! event engine only advances while a run executes, so a retried request
//! never shifts experiment timing.

use std::collections::{BTreeMap, HashMap, VecDeque};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dut::{Bench, Dut, InputRoute};
use crate::{
    Backplane, BackplaneError, ChassisTopology, Destination, FeedbackSource, ModuleKind, TriggerInstruction,
    TriggerTable, FORWARD_NS, SERIALIZE_PS_PER_BYTE, SLOTS,
};
use m2cs_awg::{Awg, AwgError, Personality, Playlist, RfStage, TriggerKind, WaveSegment, CHANNELS, CHANNEL_CAPACITY};
use m2cs_daq::{Daq, DaqConfig, DaqError, RAW_CAPACITY_PER_INPUT};
use m2cs_protocol::frame::Frame;
use m2cs_protocol::payload::{
    encode_demod_page, IdentifyInfo, RawPage, ReadDemod, ReadRaw, SetDemod, SetMixerCorrection, SetThreshold, Start,
    StatusReport, WaveAck, WritePlaylist, WriteTrigTable, WriteWave, DEMOD_PAGE_MAX, MODULE_AWG_IF, MODULE_AWG_RF,
    MODULE_DAQ, MODULE_NONE, RAW_PAGE_MAX,
};
use m2cs_protocol::{Opcode, PayloadError, Status};
use m2cs_qubit::QubitParams;
use m2cs_signal::mix_seed;
use m2cs_timebase::{BlockId, Engine, Event, EventKind, SimTime};

pub const EMULATOR_VERSION: &str = concat!("m2cs-emu ", env!("CARGO_PKG_VERSION"));
const DEDUP_CAPACITY: usize = 4096;
const TAG_L1: u8 = 0x11;
const TAG_RUN_END: u8 = 0x12;

#[derive(Debug, Clone)]
pub enum Module {
    Awg(Awg),
    Daq(Daq),
}

/// Modules by slot (index 0 is the backplane and always empty).
#[derive(Debug, Clone)]
pub struct ModuleBay {
    slots: Vec<Option<Module>>,
}

impl ModuleBay {
    fn new() -> Self {
        ModuleBay {
            slots: (0..=SLOTS).map(|_| None).collect(),
        }
    }

    pub fn get(&self, slot: u8) -> Option<&Module> {
        self.slots.get(slot as usize)?.as_ref()
    }

    pub fn awg(&self, slot: u8) -> Option<&Awg> {
        match self.get(slot) {
            Some(Module::Awg(a)) => Some(a),
            _ => None,
        }
    }

    pub fn awg_mut(&mut self, slot: u8) -> Option<&mut Awg> {
        match self.slots.get_mut(slot as usize)? {
            Some(Module::Awg(a)) => Some(a),
            _ => None,
        }
    }

    pub fn daq(&self, slot: u8) -> Option<&Daq> {
        match self.get(slot) {
            Some(Module::Daq(d)) => Some(d),
            _ => None,
        }
    }

    pub fn daq_mut(&mut self, slot: u8) -> Option<&mut Daq> {
        match self.slots.get_mut(slot as usize)? {
            Some(Module::Daq(d)) => Some(d),
            _ => None,
        }
    }

    /// Occupied slots in ascending order.
    pub fn modules(&self) -> impl Iterator<Item = (u8, &Module)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(s, m)| m.as_ref().map(|m| (s as u8, m)))
    }

    fn awgs_mut(&mut self) -> impl Iterator<Item = &mut Awg> {
        self.slots.iter_mut().filter_map(|m| match m {
            Some(Module::Awg(a)) => Some(a),
            _ => None,
        })
    }

    fn daqs_mut(&mut self) -> impl Iterator<Item = &mut Daq> {
        self.slots.iter_mut().filter_map(|m| match m {
            Some(Module::Daq(d)) => Some(d),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModuleSpec {
    AwgIf,
    AwgRf(RfStage),
    Daq(DaqConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChassisConfig {
    pub id: u8,
    pub seed: u64,
    pub topology: ChassisTopology,
    pub modules: Vec<(u8, ModuleSpec)>,
    /// Execute a run to completion inside the START command.
    pub auto_drain: bool,
}

impl ChassisConfig {
    pub fn new(id: u8, seed: u64) -> Self {
        ChassisConfig {
            id,
            seed,
            topology: ChassisTopology::standalone(),
            modules: Vec::new(),
            auto_drain: true,
        }
    }

    pub fn with_module(mut self, slot: u8, spec: ModuleSpec) -> Self {
        self.modules.push((slot, spec));
        self
    }
}

/// Slot assignments of the reference bench.
pub mod layout {
    /// Qubit drive (I/Q envelope on channels 0/1).
    pub const XY_AWG: u8 = 1;
    /// Readout pulse; AWG1 of the feedback loop.
    pub const READOUT_AWG: u8 = 2;
    /// Conditional waveform; AWG2 of the feedback loop.
    pub const BRANCH_AWG: u8 = 3;
    /// Input 0 sees the transmon, input 1 a loopback of the readout AWG.
    pub const READOUT_DAQ: u8 = 4;
    /// Records the branch AWG output.
    pub const SCOPE_DAQ: u8 = 5;
    pub const XY_LO_HZ: f64 = 4.5e9;
    pub const READOUT_LO_HZ: f64 = 6.0e9;
}

/// The reference bench: three RF AWGs, a readout DAQ and a scope DAQ.
pub fn standard_config(id: u8, seed: u64) -> ChassisConfig {
    use layout::*;
    let mut scope = DaqConfig::new(READOUT_LO_HZ);
    scope.record_raw = true;
    ChassisConfig::new(id, seed)
        .with_module(XY_AWG, ModuleSpec::AwgRf(RfStage::ideal(XY_LO_HZ)))
        .with_module(READOUT_AWG, ModuleSpec::AwgRf(RfStage::ideal(READOUT_LO_HZ)))
        .with_module(BRANCH_AWG, ModuleSpec::AwgRf(RfStage::ideal(READOUT_LO_HZ)))
        .with_module(READOUT_DAQ, ModuleSpec::Daq(DaqConfig::new(READOUT_LO_HZ)))
        .with_module(SCOPE_DAQ, ModuleSpec::Daq(scope))
}

pub fn standard_bench(params: QubitParams) -> Bench {
    use layout::*;
    let mut b = Bench::new();
    b.set_transmon(params)
        .route(
            READOUT_DAQ,
            0,
            InputRoute::Transmon {
                xy_slot: XY_AWG,
                readout_slot: Some(READOUT_AWG),
            },
        )
        .route(
            READOUT_DAQ,
            1,
            InputRoute::Loopback {
                awg_slot: READOUT_AWG,
                pair: 0,
                delay_ns: 0,
            },
        )
        .route(
            SCOPE_DAQ,
            0,
            InputRoute::Loopback {
                awg_slot: BRANCH_AWG,
                pair: 0,
                delay_ns: 0,
            },
        );
    b
}

pub fn standard(id: u8, seed: u64, params: QubitParams) -> Chassis<Bench> {
    Chassis::new(standard_config(id, seed), standard_bench(params)).expect("reference layout is valid")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChassisError {
    #[error(transparent)]
    Backplane(#[from] BackplaneError),
    #[error("chassis {0} is not a child of this chassis")]
    NotAChild(u8),
}

#[derive(Debug, Clone, Copy, Default)]
struct Run {
    active: bool,
    index: u64,
    seed: u64,
    shots_total: u32,
    shots_started: u32,
    shots_done: u32,
    period: SimTime,
    end: SimTime,
}

#[derive(Debug, Clone)]
struct Assembly {
    total: u32,
    samples: Vec<i16>,
}

/// Responses to state-changing commands, keyed by sequence number and CRC.
#[derive(Debug, Clone, Default)]
struct Dedup {
    map: HashMap<(u32, u32), Vec<u8>>,
    order: VecDeque<(u32, u32)>,
}

impl Dedup {
    fn key(bytes: &[u8], seq: u32) -> (u32, u32) {
        let crc = u32::from_be_bytes(bytes[bytes.len() - 4..].try_into().expect("decoded frame"));
        (seq, crc)
    }

    fn insert(&mut self, key: (u32, u32), resp: Vec<u8>) {
        if self.map.insert(key, resp).is_none() {
            self.order.push_back(key);
            if self.order.len() > DEDUP_CAPACITY {
                let old = self.order.pop_front().expect("non-empty");
                self.map.remove(&old);
            }
        }
    }
}

struct Nack(Status, String);

impl From<PayloadError> for Nack {
    fn from(e: PayloadError) -> Self {
        Nack(Status::BadPayload, e.to_string())
    }
}

fn invalid(e: impl ToString) -> Nack {
    Nack(Status::InvalidConfig, e.to_string())
}

fn daq_nack(e: DaqError) -> Nack {
    match e {
        DaqError::RunActive => Nack(Status::RunActive, e.to_string()),
        DaqError::StorageFull => Nack(Status::StorageFull, e.to_string()),
        e => invalid(e),
    }
}

struct Hw<D> {
    id: u8,
    seed: u64,
    backplane: Backplane,
    bay: ModuleBay,
    dut: D,
    run: Run,
    faults: u64,
    feedback_errors: u32,
    last_fault: Option<String>,
}

impl<D: Dut> Hw<D> {
    fn fault(&mut self, msg: String) {
        self.faults += 1;
        self.last_fault = Some(msg);
    }

    fn level1(&mut self, at: SimTime, shot: u32) -> Vec<Event> {
        let mut out = self.backplane.level1_trigger(at);
        for a in self.bay.awgs_mut() {
            a.clear_history();
        }
        self.dut
            .begin_shot(shot, at, mix_seed(self.run.seed, 1 << 40 | shot as u64));
        self.run.shots_started = shot + 1;
        self.run.shots_done = shot;
        if shot + 1 < self.run.shots_total {
            out.push(l1_event(at + self.run.period, shot + 1));
        }
        out
    }

    fn finish_run(&mut self, eng: &mut Engine, at: SimTime) {
        eng.cancel_where(|_| true);
        self.backplane.disarm();
        for a in self.bay.awgs_mut() {
            // NoPlaylist only means the AWG was never started.
            let _ = a.on_trigger(TriggerKind::Stop, at);
        }
        for d in self.bay.daqs_mut() {
            d.end_run();
        }
        self.run.active = false;
        self.run.shots_done = self.run.shots_started;
    }

    fn module_event(&mut self, slot: u8, ev: &Event) -> Result<Vec<Event>, String> {
        let Some(m) = self.bay.slots.get_mut(slot as usize).and_then(Option::take) else {
            return Ok(Vec::new());
        };
        match m {
            Module::Awg(mut a) => {
                let r = a.handle_event(ev).map_err(|e| format!("slot {slot}: {e}"));
                self.bay.slots[slot as usize] = Some(Module::Awg(a));
                r
            }
            Module::Daq(mut d) => {
                let shot = self.run.shots_started.saturating_sub(1);
                let offset = ev.due.saturating_sub(self.backplane.epoch()).ps();
                let seed = mix_seed(mix_seed(mix_seed(self.run.seed, slot as u64), shot as u64), offset);
                let cfg = d.config();
                let lsb = cfg.full_scale_vpp / 256.0;
                let intrinsic = (cfg.noise_rms_v.powi(2) + lsb * lsb / 12.0).sqrt();
                let (dut, bay) = (&mut self.dut, &self.bay);
                let mut source = |input: u8, w| dut.rf_input(slot, input, w, intrinsic, bay);
                let r = d
                    .handle_event(ev, &mut source, seed)
                    .map_err(|e| format!("slot {slot}: {e}"));
                self.bay.slots[slot as usize] = Some(Module::Daq(d));
                r
            }
        }
    }

    fn dispatch(&mut self, eng: &mut Engine, ev: Event) {
        let out = match ev.target {
            BlockId::HOST => {
                if ev.payload.first() == Some(&TAG_RUN_END) && self.run.active {
                    self.finish_run(eng, ev.due);
                }
                Ok(Vec::new())
            }
            BlockId::BACKPLANE
                if ev.kind == EventKind::TriggerDelivery && ev.payload.len() == 5 && ev.payload[0] == TAG_L1 =>
            {
                let shot = u32::from_be_bytes(ev.payload[1..5].try_into().expect("len checked"));
                Ok(self.level1(ev.due, shot))
            }
            BlockId::BACKPLANE => match self.backplane.handle_event(&ev) {
                Err(e @ BackplaneError::FeedbackUnavailable { .. }) => {
                    self.feedback_errors += 1;
                    Err(e.to_string())
                }
                r => r.map_err(|e| e.to_string()),
            },
            b => self.module_event(b.0 as u8, &ev),
        };
        match out {
            Ok(evs) => {
                for e in evs {
                    eng.schedule(e).expect("modules never schedule into the past");
                }
            }
            Err(msg) => self.fault(msg),
        }
    }
}

fn l1_event(at: SimTime, shot: u32) -> Event {
    let mut p = vec![TAG_L1];
    p.extend_from_slice(&shot.to_be_bytes());
    Event::new(at, BlockId::BACKPLANE, EventKind::TriggerDelivery).with_payload(p)
}

pub struct Chassis<D: Dut = Bench> {
    engine: Engine,
    hw: Hw<D>,
    children: BTreeMap<u8, Chassis<D>>,
    assembly: BTreeMap<(u8, u8, u16), Assembly>,
    dedup: Dedup,
    auto_drain: bool,
    link_ps: u64,
    datagrams: u64,
}

impl<D: Dut> Chassis<D> {
    pub fn new(cfg: ChassisConfig, dut: D) -> Result<Self, ChassisError> {
        let mut backplane = Backplane::new(cfg.id, cfg.topology.clone());
        let mut bay = ModuleBay::new();
        for (slot, spec) in cfg.modules {
            let block = BlockId::slot(slot);
            let (kind, m) = match spec {
                ModuleSpec::AwgIf => (ModuleKind::Awg, Module::Awg(Awg::new(block, Personality::If))),
                ModuleSpec::AwgRf(rf) => (ModuleKind::Awg, Module::Awg(Awg::new(block, Personality::Rf(rf)))),
                ModuleSpec::Daq(c) => (ModuleKind::Daq, Module::Daq(Daq::new(block, c))),
            };
            backplane.register_module(slot, kind)?;
            bay.slots[slot as usize] = Some(m);
        }
        Ok(Chassis {
            engine: Engine::new(),
            hw: Hw {
                id: cfg.id,
                seed: cfg.seed,
                backplane,
                bay,
                dut,
                run: Run::default(),
                faults: 0,
                feedback_errors: 0,
                last_fault: None,
            },
            children: BTreeMap::new(),
            assembly: BTreeMap::new(),
            dedup: Dedup::default(),
            auto_drain: cfg.auto_drain,
            link_ps: 0,
            datagrams: 0,
        })
    }

    pub fn id(&self) -> u8 {
        self.hw.id
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    /// Time spent forwarding datagrams on the internal 1 Gb/s hop.
    pub fn link_time(&self) -> SimTime {
        SimTime::from_ps(self.link_ps)
    }

    pub fn datagrams(&self) -> u64 {
        self.datagrams
    }

    pub fn backplane(&self) -> &Backplane {
        &self.hw.backplane
    }

    pub fn backplane_mut(&mut self) -> &mut Backplane {
        &mut self.hw.backplane
    }

    pub fn bay(&self) -> &ModuleBay {
        &self.hw.bay
    }

    pub fn bay_mut(&mut self) -> &mut ModuleBay {
        &mut self.hw.bay
    }

    pub fn dut(&self) -> &D {
        &self.hw.dut
    }

    pub fn dut_mut(&mut self) -> &mut D {
        &mut self.hw.dut
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn set_auto_drain(&mut self, on: bool) {
        self.auto_drain = on;
    }

    pub fn run_active(&self) -> bool {
        self.hw.run.active
    }

    /// Runtime errors raised by modules while events executed.
    pub fn faults(&self) -> u64 {
        self.hw.faults
    }

    pub fn last_fault(&self) -> Option<&str> {
        self.hw.last_fault.as_deref()
    }

    pub fn feedback_errors(&self) -> u32 {
        self.hw.feedback_errors
    }

    pub fn attach_child(&mut self, child: Chassis<D>) -> Result<(), ChassisError> {
        let id = child.id();
        if !self.hw.backplane.topology().children.contains(&id) {
            return Err(ChassisError::NotAChild(id));
        }
        self.children.insert(id, child);
        Ok(())
    }

    pub fn child_mut(&mut self, id: u8) -> Option<&mut Chassis<D>> {
        self.children.get_mut(&id)
    }

    /// Executes events up to and including `t`.
    pub fn advance_to(&mut self, t: SimTime) -> usize {
        let hw = &mut self.hw;
        self.engine.run_until(t, |eng, _, ev| hw.dispatch(eng, ev))
    }

    /// Runs the active run to completion.
    pub fn drain(&mut self) {
        if self.hw.run.active {
            let end = self.hw.run.end;
            self.advance_to(end);
        }
    }

    fn start_run(&mut self, shots: u32, period_ns: u32) -> Result<(), Nack> {
        if shots == 0 || period_ns == 0 {
            return Err(invalid("shots and period must be positive"));
        }
        let period = SimTime::from_ns(period_ns as u64).ceil_to(SimTime::FSM_TICK);
        let t0 = self.engine.now().ceil_to(SimTime::FSM_TICK);
        let run = &mut self.hw.run;
        run.index += 1;
        *run = Run {
            active: true,
            index: run.index,
            seed: mix_seed(self.hw.seed, run.index),
            shots_total: shots,
            shots_started: 0,
            shots_done: 0,
            period,
            end: t0 + SimTime::from_ps(period.ps() * shots as u64),
        };
        for d in self.hw.bay.daqs_mut() {
            d.begin_run();
        }
        self.hw.backplane.clear_emissions();
        self.engine.schedule(l1_event(t0, 0)).expect("t0 is not in the past");
        let end =
            Event::new(self.hw.run.end, BlockId::HOST, EventKind::TriggerDelivery).with_payload(vec![TAG_RUN_END]);
        self.engine.schedule(end).expect("end is after t0");
        if self.auto_drain {
            self.drain();
        }
        Ok(())
    }

    /// Aborts the active run now.
    pub fn stop_run(&mut self) {
        if self.hw.run.active {
            let now = self.engine.now();
            self.hw.finish_run(&mut self.engine, now);
        }
    }

    pub fn status(&self, slot: u8) -> StatusReport {
        let results = match self.hw.bay.daq(slot) {
            Some(d) => d.results().len(),
            None => self
                .hw
                .bay
                .modules()
                .filter_map(|(s, _)| self.hw.bay.daq(s))
                .map(|d| d.results().len())
                .sum(),
        };
        StatusReport {
            run_active: self.hw.run.active,
            now_ps: self.engine.now().ps(),
            shots_done: self.hw.run.shots_done,
            shots_total: self.hw.run.shots_total,
            results: results as u32,
            feedback_errors: self.hw.feedback_errors,
            digest: self.digest(),
        }
    }

    /// SHA-256 over trigger tables, module configuration and stored data.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update([self.hw.id]);
        for slot in 1..=SLOTS {
            if let Some(t) = self.hw.backplane.table(slot) {
                h.update([slot]);
                for i in t.instructions() {
                    h.update(i.raw().to_be_bytes());
                }
                h.update(format!("{:?}", t.feedback()).as_bytes());
            }
        }
        for (slot, m) in self.hw.bay.modules() {
            h.update([0xA5, slot]);
            match m {
                Module::Awg(a) => {
                    h.update(format!("{:?}", a.personality()).as_bytes());
                    for ch in 0..CHANNELS {
                        for id in a.segment_ids(ch) {
                            h.update([ch as u8]);
                            h.update(id.to_be_bytes());
                            let seg = a.segment(ch, id).expect("listed");
                            h.update((seg.len() as u32).to_be_bytes());
                            for c in seg {
                                h.update(c.code().to_be_bytes());
                            }
                        }
                    }
                    h.update(format!("{:?}", a.playlist().map(Playlist::entries)).as_bytes());
                }
                Module::Daq(d) => {
                    h.update(format!("{:?}", d.config()).as_bytes());
                    for cfg in d.enabled_channels() {
                        h.update(format!("{cfg:?} {:?}", d.threshold(cfg.channel)).as_bytes());
                    }
                    for r in d.results() {
                        h.update([r.channel, r.state_bit]);
                        h.update(r.shot_index.to_be_bytes());
                        h.update(r.i_acc.to_be_bytes());
                        h.update(r.q_acc.to_be_bytes());
                    }
                    for input in 0..2 {
                        let raw = d.read_raw(input, 0, RAW_CAPACITY_PER_INPUT).unwrap_or(&[]);
                        h.update((raw.len() as u32).to_be_bytes());
                        for &(i, q) in raw {
                            h.update([i as u8, q as u8]);
                        }
                    }
                }
            }
        }
        for ((slot, ch, id), a) in &self.assembly {
            h.update([0x5A, *slot, *ch]);
            h.update(id.to_be_bytes());
            h.update(a.total.to_be_bytes());
            h.update((a.samples.len() as u32).to_be_bytes());
        }
        h.finalize().into()
    }

    /// Handles one request datagram and returns the response datagram.
    /// Response frames and frames too short to address are dropped.
    pub fn handle_datagram(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
        self.datagrams += 1;
        self.link_ps += FORWARD_NS * 1000 + SERIALIZE_PS_PER_BYTE * bytes.len() as u64;
        let (frame, route) = match self.hw.backplane.route_datagram(bytes) {
            Ok(x) => x,
            Err(e) => {
                let hdr = Frame::salvage_header(bytes)?;
                if hdr.is_response() {
                    return None;
                }
                let status = match e {
                    BackplaneError::CrcMismatch => Status::CrcMismatch,
                    BackplaneError::UnknownSlot(_) => Status::UnknownSlot,
                    BackplaneError::UnknownChassis(_) => Status::UnknownChassis,
                    _ => Status::BadPayload,
                };
                return hdr.nack(status.code(), &e.to_string()).encode().ok();
            }
        };
        if frame.is_response() {
            return None;
        }
        if let Destination::Child(id) = route.destination {
            return match self.children.get_mut(&id) {
                Some(c) => c.handle_datagram(bytes),
                None => frame
                    .nack(Status::UnknownChassis.code(), "child chassis not attached")
                    .encode()
                    .ok(),
            };
        }
        let key = Dedup::key(bytes, frame.seq);
        if let Some(cached) = self.dedup.map.get(&key) {
            return Some(cached.clone());
        }
        let resp = self.execute(&frame);
        let out = resp.encode().expect("responses fit one frame");
        let writes = Opcode::from_code(frame.opcode).is_some_and(|o| !o.is_read_only());
        if writes && !resp.is_nack() {
            self.dedup.insert(key, out.clone());
        }
        Some(out)
    }

    fn execute(&mut self, f: &Frame) -> Frame {
        let Some(op) = Opcode::from_code(f.opcode) else {
            return f.nack(
                Status::UnknownOpcode.code(),
                &format!("unknown opcode {:#06x}", f.opcode),
            );
        };
        match self.command(op, f) {
            Ok(payload) => f.ack(payload),
            Err(Nack(s, msg)) => f.nack(s.code(), &msg),
        }
    }

    fn awg_at(&mut self, slot: u8) -> Result<&mut Awg, Nack> {
        self.hw
            .bay
            .awg_mut(slot)
            .ok_or_else(|| Nack(Status::WrongModule, format!("slot {slot} is not an AWG")))
    }

    fn daq_at(&mut self, slot: u8) -> Result<&mut Daq, Nack> {
        self.hw
            .bay
            .daq_mut(slot)
            .ok_or_else(|| Nack(Status::WrongModule, format!("slot {slot} is not a DAQ")))
    }

    fn backplane_only(slot: u8) -> Result<(), Nack> {
        if slot == 0 {
            Ok(())
        } else {
            Err(Nack(
                Status::WrongModule,
                "command is handled by the backplane (slot 0)".into(),
            ))
        }
    }

    fn command(&mut self, op: Opcode, f: &Frame) -> Result<Vec<u8>, Nack> {
        let slot = f.slot;
        let p = &f.payload[..];
        if !op.is_read_only() && op != Opcode::Stop && self.hw.run.active {
            return Err(Nack(Status::RunActive, "a run is in progress".into()));
        }
        match op {
            Opcode::Ping => Ok(p.to_vec()),
            Opcode::Identify => {
                let mut modules = [MODULE_NONE; 14];
                for (s, m) in self.hw.bay.modules() {
                    modules[s as usize - 1] = match m {
                        Module::Awg(a) if matches!(a.personality(), Personality::If) => MODULE_AWG_IF,
                        Module::Awg(_) => MODULE_AWG_RF,
                        Module::Daq(_) => MODULE_DAQ,
                    };
                }
                Ok(IdentifyInfo {
                    chassis: self.hw.id,
                    modules,
                    emulator_version: EMULATOR_VERSION.into(),
                }
                .encode())
            }
            Opcode::ReadStatus => Ok(self.status(slot).encode()),
            Opcode::WriteWave => self.write_wave(slot, WriteWave::decode(p)?),
            Opcode::WritePlaylist => {
                let w = WritePlaylist::decode(p)?;
                let pl = Playlist::new(w.entries).map_err(invalid)?;
                self.awg_at(slot)?.set_playlist(pl);
                Ok(Vec::new())
            }
            Opcode::WriteTrigTable => {
                Self::backplane_only(slot)?;
                let w = WriteTrigTable::decode(p)?;
                let instrs = w
                    .instructions
                    .iter()
                    .map(|&r| TriggerInstruction::from_raw(r))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| Nack(Status::BadPayload, e.to_string()))?;
                let fb = w
                    .feedback
                    .map(|(daq_slot, channel)| FeedbackSource { daq_slot, channel });
                let bp = &mut self.hw.backplane;
                let r = if w.append {
                    bp.append_table(w.target_slot, instrs)
                } else {
                    TriggerTable::new(instrs, fb).and_then(|t| bp.set_table(w.target_slot, t))
                };
                r.map_err(|e| match e {
                    BackplaneError::UnknownSlot(_) | BackplaneError::BadSlot(_) => {
                        Nack(Status::UnknownSlot, e.to_string())
                    }
                    e => invalid(e),
                })?;
                Ok(Vec::new())
            }
            Opcode::SetDemod => {
                let s = SetDemod::decode(p)?;
                let d = self.daq_at(slot)?;
                match s.config {
                    Some(cfg) => d.configure_channel(cfg),
                    None => d.disable_channel(s.channel),
                }
                .map_err(daq_nack)?;
                Ok(Vec::new())
            }
            Opcode::SetThreshold => {
                let s = SetThreshold::decode(p)?;
                self.daq_at(slot)?
                    .set_threshold(s.channel, s.threshold)
                    .map_err(daq_nack)?;
                Ok(Vec::new())
            }
            Opcode::SetMixerCorrection => {
                let s = SetMixerCorrection::decode(p)?;
                self.awg_at(slot)?
                    .set_correction(s.pair as usize, s.correction)
                    .map_err(|e| match e {
                        AwgError::NotRf => Nack(Status::WrongModule, e.to_string()),
                        e => invalid(e),
                    })?;
                Ok(Vec::new())
            }
            Opcode::Start => {
                Self::backplane_only(slot)?;
                let s = Start::decode(p)?;
                self.start_run(s.shots, s.period_ns)?;
                Ok(Vec::new())
            }
            Opcode::Stop => {
                Self::backplane_only(slot)?;
                if !p.is_empty() {
                    return Err(PayloadError::Trailing(p.len()).into());
                }
                self.stop_run();
                Ok(Vec::new())
            }
            Opcode::ReadDemod => {
                let r = ReadDemod::decode(p)?;
                let d = self.daq_at(slot)?;
                let page = d
                    .read_demod(r.after as usize, (r.max as usize).min(DEMOD_PAGE_MAX))
                    .map_err(daq_nack)?;
                Ok(encode_demod_page(page)?)
            }
            Opcode::ReadRaw => {
                let r = ReadRaw::decode(p)?;
                let d = self.daq_at(slot)?;
                let total = d.raw_len(r.input) as u32;
                let samples = d
                    .read_raw(r.input, r.offset as usize, (r.max as usize).min(RAW_PAGE_MAX))
                    .map_err(daq_nack)?;
                Ok(RawPage {
                    total,
                    samples: samples.to_vec(),
                }
                .encode()?)
            }
        }
    }

    fn write_wave(&mut self, slot: u8, w: WriteWave) -> Result<Vec<u8>, Nack> {
        self.awg_at(slot)?;
        if w.channel as usize >= CHANNELS {
            return Err(invalid(AwgError::BadChannel(w.channel)));
        }
        if w.total_len as usize > CHANNEL_CAPACITY {
            return Err(Nack(
                Status::CapacityExceeded,
                format!(
                    "{} samples exceed the {CHANNEL_CAPACITY}-sample channel memory",
                    w.total_len
                ),
            ));
        }
        let end = w.offset as u64 + w.samples.len() as u64;
        if end > w.total_len as u64 {
            return Err(Nack(Status::BadPayload, "chunk runs past the segment length".into()));
        }
        let key = (slot, w.channel, w.segment_id);
        if w.offset == 0 {
            self.assembly.insert(
                key,
                Assembly {
                    total: w.total_len,
                    samples: Vec::with_capacity(w.total_len as usize),
                },
            );
        }
        let buf = match self.assembly.get_mut(&key) {
            Some(b) if b.total == w.total_len && b.samples.len() == w.offset as usize => b,
            Some(b) => {
                return Err(Nack(
                    Status::OutOfOrderChunk,
                    format!("expected offset {}, got {}", b.samples.len(), w.offset),
                ))
            }
            None => {
                return Err(Nack(
                    Status::OutOfOrderChunk,
                    format!("offset {} before offset 0", w.offset),
                ))
            }
        };
        buf.samples.extend_from_slice(&w.samples);
        let received = buf.samples.len() as u32;
        if received < w.total_len {
            return Ok(WaveAck {
                received,
                complete: false,
            }
            .encode());
        }
        let done = self.assembly.remove(&key).expect("present");
        let samples = done
            .samples
            .iter()
            .map(|&c| m2cs_signal::DacCode::new(c).ok_or(c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|c| invalid(format!("code {c} outside the 14-bit range")))?;
        self.awg_at(slot)?
            .load_segment(
                w.channel,
                WaveSegment {
                    segment_id: w.segment_id,
                    samples,
                },
            )
            .map_err(|e| Nack(Status::CapacityExceeded, e.to_string()))?;
        Ok(WaveAck {
            received,
            complete: true,
        }
        .encode())
    }
}

impl<D: Dut> m2cs_protocol::Endpoint for Chassis<D> {
    fn handle_datagram(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
        Chassis::handle_datagram(self, bytes)
    }
}
