// SPDX-License-Identifier: Apache-2.0

//! Memory and register bridges.
//!
//! The memory bridge is the AXI subordinate behind every DUT manager port.
//! DDR has one data slot per cycle, shared by all ports through the
//! arbiter. A read burst becomes eligible the cycle after its AR handshake;
//! each granted slot moves one beat into a small per-port R FIFO. A write
//! burst is staged beat by beat and committed to the image when its B
//! response is accepted.
//!
//! The register bridge decodes firmware register accesses into the DUT
//! process that owns the address; see [`RegisterMap`].

use std::collections::VecDeque;

use thiserror::Error;

use crate::axi::{AddrBeat, DataBeat, Resp, RespBeat, MAX_BUS_BYTES};
use crate::congestion::{ChannelCongestion, CongestionError, CongestionProfile, PortStreams, StreamState};
use crate::firmware::RegFault;
use crate::kernel::CycleIo;
use crate::profiler::{BeatRecord, Direction};
use crate::signals::{AxiChannels, Beat, ChannelSample};

pub const DEFAULT_MAX_OUTSTANDING: usize = 4;
/// Beats a port may hold fetched but undelivered.
pub const R_FIFO_DEPTH: usize = 2;
/// Cycles before firmware learns an address decoded to nothing.
pub const UNMAPPED_DECODE_LATENCY: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum BridgeError {
    #[error("manager port '{0}' is already attached")]
    DuplicatePort(String),
    #[error("port '{name}': bus width {bytes} bytes is not a power of two in 1..={MAX_BUS_BYTES}")]
    BusWidth { name: String, bytes: usize },
    #[error("port '{port}': {source}")]
    Congestion { port: String, source: CongestionError },
    #[error("fixed-priority order must list every attached port exactly once: {0}")]
    PriorityOrder(String),
    #[error("no manager port named '{0}'")]
    UnknownPort(String),
    #[error("register window '{a}' overlaps '{b}'")]
    RegisterOverlap { a: String, b: String },
    #[error("register window '{0}' is empty or misaligned")]
    RegisterWindow(String),
    #[error("outstanding-transaction limit must be at least 1")]
    Outstanding,
}

/// Channels and width of one manager port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManagerPortIface {
    pub name: String,
    pub bus_bytes: usize,
    pub channels: AxiChannels,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ArbitrationPolicy {
    /// Earlier names win.
    FixedPriority(Vec<String>),
    /// Rotates starting after the last granted port, in attachment order.
    #[default]
    RoundRobin,
}

/// Resolved form of [`ArbitrationPolicy`] over port indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arbitration {
    Fixed(Vec<usize>),
    RoundRobin { ports: usize },
}

/// Picks one requester. `requests` must be non-empty and hold valid port
/// indices; `last` is the previously granted port.
pub fn arbitrate(requests: &[usize], policy: &Arbitration, last: Option<usize>) -> Option<usize> {
    if requests.is_empty() {
        return None;
    }
    match policy {
        Arbitration::Fixed(order) => order.iter().copied().find(|p| requests.contains(p)),
        Arbitration::RoundRobin { ports } => {
            let start = last.map(|l| l + 1).unwrap_or(0);
            (0..*ports).map(|k| (start + k) % ports).find(|p| requests.contains(p))
        }
    }
}

/// Deliberate protocol faults, injected once on a port's R channel so the
/// checker can be shown to catch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Drop RVALID for one cycle while a beat is stalled.
    RetractValid,
    /// Alter RDATA while a beat is stalled.
    CorruptStalledPayload,
    /// Raise RLAST one beat early in the first multi-beat burst.
    EarlyLast,
}

#[derive(Debug)]
struct ReadBurst {
    addr: AddrBeat,
    accepted_at: u64,
    fetched: usize,
}

#[derive(Debug)]
struct Fetched {
    beat: DataBeat,
    bytes: u64,
    is_final: bool,
}

#[derive(Debug)]
struct StagedBeat {
    addr: u64,
    data: Vec<u8>,
    enable: Vec<bool>,
}

#[derive(Debug)]
struct WriteBurst {
    addr: AddrBeat,
    beats: Vec<StagedBeat>,
}

impl WriteBurst {
    fn staged_bytes(&self) -> u64 {
        self.beats.iter().map(|b| b.enable.iter().filter(|&&e| e).count() as u64).sum()
    }
}

/// Response-side VALID presentation under congestion.
#[derive(Debug, Default)]
struct Presenter {
    delay: Option<u32>,
    shown: bool,
}

impl Presenter {
    fn reset(&mut self) {
        self.delay = None;
        self.shown = false;
    }

    /// Whether to drive VALID next cycle for the current front payload.
    fn step(&mut self, has_front: bool, rng: &mut StreamState, c: &ChannelCongestion) -> bool {
        if !has_front {
            self.reset();
            return false;
        }
        if self.shown {
            return true;
        }
        let d = self.delay.get_or_insert_with(|| rng.draw_valid_delay(c));
        if *d > 0 {
            *d -= 1;
            return false;
        }
        if !rng.gate_ready(c) {
            return false;
        }
        self.shown = true;
        true
    }
}

/// Derives profiler records from one port's committed samples.
#[derive(Debug, Default)]
struct PortObserver {
    reads: VecDeque<(AddrBeat, usize)>,
    writes: VecDeque<(AddrBeat, usize)>,
}

impl PortObserver {
    fn observe(&mut self, name: &str, ch: &AxiChannels, cycle: u64, s: &[ChannelSample], out: &mut Vec<BeatRecord>) {
        let get = |c: crate::signals::ChannelId| &s[c.index()];
        let (ar, r, aw, w, b) = (get(ch.ar), get(ch.r), get(ch.aw), get(ch.w), get(ch.b));
        if ar.fired() {
            if let Some(a) = ar.payload.as_ref().and_then(Beat::as_addr) {
                self.reads.push_back((*a, 0));
            }
        }
        if aw.fired() {
            if let Some(a) = aw.payload.as_ref().and_then(Beat::as_addr) {
                self.writes.push_back((*a, 0));
            }
        }
        let mut rec = |direction, bytes: u32, addr, stalled| {
            out.push(BeatRecord { cycle, port: name.to_string(), direction, bytes, stalled, addr });
        };
        if r.fired() {
            let (bytes, addr) = match self.reads.front_mut() {
                Some((a, n)) => {
                    let addr = a.beat_addr(*n);
                    *n += 1;
                    let bytes = a.beat_bytes() as u32;
                    if *n == a.beats() {
                        self.reads.pop_front();
                    }
                    (bytes, Some(addr))
                }
                None => (r.payload.as_ref().and_then(Beat::as_data).map_or(0, |d| d.data.len() as u32), None),
            };
            rec(Direction::Read, bytes, addr, false);
        }
        if w.fired() {
            let d = w.payload.as_ref().and_then(Beat::as_data);
            let (bytes, addr) = match self.writes.front_mut() {
                Some((a, n)) => {
                    let addr = a.beat_addr(*n);
                    let lanes = lane_offset(addr, a.beat_bytes(), d.map_or(0, |d| d.data.len()));
                    let bytes = d.map_or(0, |d| ((d.strb >> lanes) & crate::axi::lane_mask(a.beat_bytes())).count_ones());
                    *n += 1;
                    if *n == a.beats() {
                        self.writes.pop_front();
                    }
                    (bytes, Some(addr))
                }
                None => (d.map_or(0, |d| d.strb.count_ones()), None),
            };
            rec(Direction::Write, bytes, addr, false);
        }
        if ar.stalled() || r.stalled() {
            rec(Direction::Read, 0, None, true);
        } else if aw.stalled() || w.stalled() || b.stalled() {
            rec(Direction::Write, 0, None, true);
        }
    }
}

fn lane_offset(addr: u64, beat_bytes: usize, bus_bytes: usize) -> usize {
    if bus_bytes == 0 {
        return 0;
    }
    (addr as usize % bus_bytes) & !(beat_bytes - 1)
}

#[derive(Debug)]
struct BridgePort {
    iface: ManagerPortIface,
    congestion: CongestionProfile,
    streams: PortStreams,
    reads: VecDeque<ReadBurst>,
    reads_open: usize,
    r_fifo: VecDeque<Fetched>,
    r_present: Presenter,
    writes: VecDeque<WriteBurst>,
    b_queue: VecDeque<WriteBurst>,
    b_present: Presenter,
    prefer_write: bool,
    undelivered: u64,
    staged: u64,
    mutation: Option<Mutation>,
    observer: PortObserver,
}

/// Shared-DDR AXI subordinate for all manager ports.
#[derive(Debug)]
pub struct MemoryBridge {
    ports: Vec<BridgePort>,
    policy: ArbitrationPolicy,
    resolved: Option<Arbitration>,
    last_grant: Option<usize>,
    max_outstanding: usize,
}

impl Default for MemoryBridge {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryBridge {
    pub fn new() -> Self {
        Self {
            ports: Vec::new(),
            policy: ArbitrationPolicy::default(),
            resolved: None,
            last_grant: None,
            max_outstanding: DEFAULT_MAX_OUTSTANDING,
        }
    }

    pub fn attach(&mut self, iface: ManagerPortIface, congestion: CongestionProfile) -> Result<(), BridgeError> {
        if self.ports.iter().any(|p| p.iface.name == iface.name) {
            return Err(BridgeError::DuplicatePort(iface.name));
        }
        if !iface.bus_bytes.is_power_of_two() || iface.bus_bytes > MAX_BUS_BYTES {
            return Err(BridgeError::BusWidth { name: iface.name, bytes: iface.bus_bytes });
        }
        congestion
            .validate()
            .map_err(|source| BridgeError::Congestion { port: iface.name.clone(), source })?;
        let streams = PortStreams::new(congestion.seed, &iface.name);
        self.ports.push(BridgePort {
            iface,
            congestion,
            streams,
            reads: VecDeque::new(),
            reads_open: 0,
            r_fifo: VecDeque::new(),
            r_present: Presenter::default(),
            writes: VecDeque::new(),
            b_queue: VecDeque::new(),
            b_present: Presenter::default(),
            prefer_write: false,
            undelivered: 0,
            staged: 0,
            mutation: None,
            observer: PortObserver::default(),
        });
        self.resolved = None;
        Ok(())
    }

    pub fn ports(&self) -> impl Iterator<Item = &ManagerPortIface> {
        self.ports.iter().map(|p| &p.iface)
    }

    pub fn set_policy(&mut self, policy: ArbitrationPolicy) {
        self.policy = policy;
        self.resolved = None;
    }

    pub fn set_max_outstanding(&mut self, n: usize) -> Result<(), BridgeError> {
        if n == 0 {
            return Err(BridgeError::Outstanding);
        }
        self.max_outstanding = n;
        Ok(())
    }

    /// Replaces the congestion profile of an attached port. Streams are
    /// reseeded from the new profile.
    pub fn set_congestion(&mut self, port: &str, congestion: CongestionProfile) -> Result<(), BridgeError> {
        congestion
            .validate()
            .map_err(|source| BridgeError::Congestion { port: port.to_string(), source })?;
        let p = self.port_mut(port)?;
        p.streams = PortStreams::new(congestion.seed, port);
        p.congestion = congestion;
        Ok(())
    }

    pub fn inject(&mut self, port: &str, mutation: Mutation) -> Result<(), BridgeError> {
        self.port_mut(port)?.mutation = Some(mutation);
        Ok(())
    }

    fn port_mut(&mut self, name: &str) -> Result<&mut BridgePort, BridgeError> {
        self.ports
            .iter_mut()
            .find(|p| p.iface.name == name)
            .ok_or_else(|| BridgeError::UnknownPort(name.to_string()))
    }

    /// Validates the arbitration policy against the attached ports.
    pub fn prepare(&mut self) -> Result<(), BridgeError> {
        let resolved = match &self.policy {
            ArbitrationPolicy::RoundRobin => Arbitration::RoundRobin { ports: self.ports.len() },
            ArbitrationPolicy::FixedPriority(order) => {
                let mut idx = Vec::with_capacity(order.len());
                for name in order {
                    let i = self
                        .ports
                        .iter()
                        .position(|p| &p.iface.name == name)
                        .ok_or_else(|| BridgeError::PriorityOrder(format!("'{name}' is not attached")))?;
                    if idx.contains(&i) {
                        return Err(BridgeError::PriorityOrder(format!("'{name}' listed twice")));
                    }
                    idx.push(i);
                }
                if let Some(p) = self.ports.iter().enumerate().find(|(i, _)| !idx.contains(i)) {
                    return Err(BridgeError::PriorityOrder(format!("'{}' missing", p.1.iface.name)));
                }
                Arbitration::Fixed(idx)
            }
        };
        self.resolved = Some(resolved);
        Ok(())
    }

    /// Bytes fetched but not yet delivered on R, and bytes staged from W but
    /// not yet committed.
    pub fn inflight_bytes(&self) -> (u64, u64) {
        self.ports.iter().fold((0, 0), |(r, w), p| (r + p.undelivered, w + p.staged))
    }

    /// Profiler records for the committed samples of `cycle`.
    pub(crate) fn observe(&mut self, cycle: u64, samples: &[ChannelSample], out: &mut Vec<BeatRecord>) {
        for p in &mut self.ports {
            p.observer.observe(&p.iface.name, &p.iface.channels, cycle, samples, out);
        }
    }

    /// Phase-1 work of the bridge for one cycle.
    pub(crate) fn service(&mut self, io: &mut CycleIo<'_>) {
        if self.resolved.is_none() {
            self.prepare().expect("arbitration policy");
        }
        let t = io.cycle();

        // Handshakes that completed this cycle.
        for p in &mut self.ports {
            let ch = p.iface.channels;
            if io.fired(ch.ar) {
                if let Some(a) = io.payload(ch.ar).and_then(Beat::as_addr) {
                    p.reads.push_back(ReadBurst { addr: *a, accepted_at: t, fetched: 0 });
                    p.reads_open += 1;
                }
            }
            if io.fired(ch.aw) {
                if let Some(a) = io.payload(ch.aw).and_then(Beat::as_addr) {
                    p.writes.push_back(WriteBurst { addr: *a, beats: Vec::new() });
                }
            }
            if io.fired(ch.w) {
                let d = io.payload(ch.w).and_then(Beat::as_data).cloned();
                if let (Some(d), Some(burst)) = (d, p.writes.front_mut()) {
                    let n = burst.beats.len();
                    let addr = burst.addr.beat_addr(n);
                    let bb = burst.addr.beat_bytes();
                    let off = lane_offset(addr, bb, p.iface.bus_bytes);
                    let mut data = vec![0u8; bb];
                    let mut enable = vec![false; bb];
                    for i in 0..bb {
                        data[i] = d.data.get(off + i).copied().unwrap_or(0);
                        enable[i] = (d.strb >> (off + i)) & 1 == 1;
                    }
                    let staged = enable.iter().filter(|&&e| e).count() as u64;
                    p.staged += staged;
                    burst.beats.push(StagedBeat { addr, data, enable });
                    if burst.beats.len() == burst.addr.beats() {
                        let done = p.writes.pop_front().expect("head burst");
                        p.b_queue.push_back(done);
                    }
                }
            }
            if io.fired(ch.r) {
                if let Some(f) = p.r_fifo.pop_front() {
                    p.undelivered -= f.bytes;
                    if f.is_final {
                        p.reads_open -= 1;
                    }
                }
                p.r_present.reset();
            }
            if io.fired(ch.b) {
                if let Some(burst) = p.b_queue.pop_front() {
                    p.staged -= burst.staged_bytes();
                    let mem = io.memory();
                    for b in &burst.beats {
                        mem.bus_write(&p.iface.name, b.addr, &b.data, &b.enable);
                    }
                }
                p.b_present.reset();
            }
        }

        // Slot requests. Gates are drawn every cycle so a port's stream
        // position depends only on elapsed cycles.
        let mut wants_read = vec![false; self.ports.len()];
        let mut wants_write = vec![false; self.ports.len()];
        for (i, p) in self.ports.iter_mut().enumerate() {
            let ch = p.iface.channels;
            let w_gate = p.streams.w.gate_ready(&p.congestion.w);
            wants_read[i] = p.r_fifo.len() < R_FIFO_DEPTH
                && p.reads.front().is_some_and(|b| b.accepted_at < t && b.fetched < b.addr.beats());
            wants_write[i] = w_gate && !p.writes.is_empty() && io.valid(ch.w);
        }
        let requests: Vec<usize> = (0..self.ports.len()).filter(|&i| wants_read[i] || wants_write[i]).collect();
        let grant = arbitrate(&requests, self.resolved.as_ref().expect("resolved"), self.last_grant);
        if grant.is_some() {
            self.last_grant = grant;
        }

        for (i, p) in self.ports.iter_mut().enumerate() {
            let ch = p.iface.channels;
            let mut grant_write = false;
            if grant == Some(i) {
                let write = match (wants_read[i], wants_write[i]) {
                    (true, true) => p.prefer_write,
                    (_, w) => w,
                };
                if wants_read[i] && wants_write[i] {
                    p.prefer_write = !write;
                }
                if write {
                    grant_write = true;
                } else {
                    fetch_beat(p, io);
                }
            }
            io.drive_ready(ch.w, grant_write);

            let ar_gate = p.streams.ar.gate_ready(&p.congestion.ar);
            let aw_gate = p.streams.aw.gate_ready(&p.congestion.aw);
            io.drive_ready(ch.ar, ar_gate && p.reads_open < self.max_outstanding);
            io.drive_ready(ch.aw, aw_gate && p.writes.len() + p.b_queue.len() < self.max_outstanding);

            // R presentation, with optional one-shot faults.
            let stalled = io.sample(ch.r).stalled();
            let mut out = if p.r_present.step(!p.r_fifo.is_empty(), &mut p.streams.r, &p.congestion.r) {
                p.r_fifo.front().map(|f| Beat::Data(f.beat.clone()))
            } else {
                None
            };
            if stalled && out.is_some() {
                match p.mutation {
                    Some(Mutation::RetractValid) => {
                        p.mutation = None;
                        out = None;
                        p.r_present.reset();
                        p.r_present.delay = Some(0);
                    }
                    Some(Mutation::CorruptStalledPayload) => {
                        p.mutation = None;
                        let front = &mut p.r_fifo.front_mut().expect("front").beat;
                        front.data[0] ^= 0xFF;
                        out = Some(Beat::Data(front.clone()));
                    }
                    _ => {}
                }
            }
            io.drive(ch.r, out);

            let b_out = p.b_present.step(!p.b_queue.is_empty(), &mut p.streams.b, &p.congestion.b);
            let b_beat = b_out
                .then(|| p.b_queue.front().map(|w| Beat::Resp(RespBeat { id: w.addr.id, resp: Resp::Okay })))
                .flatten();
            io.drive(ch.b, b_beat);
        }
    }
}

fn fetch_beat(p: &mut BridgePort, io: &mut CycleIo<'_>) {
    let bus = p.iface.bus_bytes;
    let early = p.mutation == Some(Mutation::EarlyLast);
    let burst = p.reads.front_mut().expect("granted read");
    let n = burst.fetched;
    let beats = burst.addr.beats();
    let addr = burst.addr.beat_addr(n);
    let bb = burst.addr.beat_bytes();
    let off = lane_offset(addr, bb, bus);
    let bytes = io.memory().bus_read(&p.iface.name, addr, bb);
    let mut data = vec![0u8; bus];
    data[off..off + bb].copy_from_slice(&bytes);
    let is_final = n + 1 == beats;
    let mut last = is_final;
    if early && beats >= 2 && n + 2 == beats {
        last = true;
        p.mutation = None;
    }
    let beat = DataBeat::read(burst.addr.id, data, last);
    burst.fetched += 1;
    if burst.fetched == beats {
        p.reads.pop_front();
    }
    p.undelivered += bb as u64;
    p.r_fifo.push_back(Fetched { beat, bytes: bb as u64, is_final });
}

/// One firmware-visible register window owned by a DUT process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterPort {
    pub name: String,
    pub base: u64,
    pub len: u64,
    /// Cycles from the access until the firmware call returns.
    pub latency: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decoded {
    pub owner: usize,
    pub offset: u32,
    pub latency: u32,
}

/// Disjoint address windows mapped to their owning process.
#[derive(Debug, Clone, Default)]
pub struct RegisterMap {
    ports: Vec<(RegisterPort, usize)>,
}

impl RegisterMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, port: RegisterPort, owner: usize) -> Result<(), BridgeError> {
        if port.len == 0 || !port.base.is_multiple_of(4) || !port.len.is_multiple_of(4) {
            return Err(BridgeError::RegisterWindow(port.name));
        }
        if let Some((other, _)) = self
            .ports
            .iter()
            .find(|(p, _)| port.base < p.base + p.len && p.base < port.base + port.len)
        {
            return Err(BridgeError::RegisterOverlap { a: port.name, b: other.name.clone() });
        }
        self.ports.push((port, owner));
        Ok(())
    }

    pub fn ports(&self) -> impl Iterator<Item = &RegisterPort> {
        self.ports.iter().map(|(p, _)| p)
    }

    pub fn decode(&self, addr: u64) -> Result<Decoded, RegFault> {
        if !addr.is_multiple_of(4) {
            return Err(RegFault::Misaligned(addr));
        }
        self.ports
            .iter()
            .find(|(p, _)| addr >= p.base && addr < p.base + p.len)
            .map(|(p, owner)| Decoded { owner: *owner, offset: (addr - p.base) as u32, latency: p.latency })
            .ok_or(RegFault::Unmapped(addr))
    }
}
