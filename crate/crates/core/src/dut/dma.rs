// SPDX-License-Identifier: Apache-2.0

//! Memory-to-stream and stream-to-memory DMA engines.
//!
//! Register map (offsets from the DMA base):
//!
//! | offset | name      | access                                      |
//! |--------|-----------|---------------------------------------------|
//! | 0x00   | CTRL      | bit0 START (write 1)                        |
//! | 0x04   | STATUS    | bit0 BUSY, bit1 DONE (W1C), bit2 ERR        |
//! | 0x08   | ADDR_LO   | r/w                                         |
//! | 0x0C   | ADDR_HI   | r/w                                         |
//! | 0x10   | LEN_BYTES | r/w                                         |
//!
//! START while BUSY is ignored. START clears DONE and ERR, then sets ERR
//! instead of BUSY if ADDR or LEN is not a multiple of the bus width.
//! A zero-length START completes at once.

use std::collections::VecDeque;

use crate::axi::{AddrBeat, DataBeat, BOUNDARY_4K, MAX_BURST_BEATS};
use crate::kernel::{CycleIo, HardwareProcess, Probe};
use crate::signals::{AxiChannels, Beat, ChannelId, StreamBeat};

use super::stream::StreamOut;
use super::{STATUS_BUSY, STATUS_DONE, STATUS_ERR};

pub const CTRL: u32 = 0x00;
pub const STATUS: u32 = 0x04;
pub const ADDR_LO: u32 = 0x08;
pub const ADDR_HI: u32 = 0x0C;
pub const LEN_BYTES: u32 = 0x10;
pub const DMA_WINDOW: u64 = 0x20;
pub const DMA_LATENCY: u32 = 2;
/// Stream-side buffering of the MM2S engine, in beats.
pub const MM2S_FIFO_DEPTH: usize = 4;
/// Write-data buffering of the S2MM engine, in beats.
pub const S2MM_FIFO_DEPTH: usize = 2;

/// Splits a transfer into maximal legal INCR bursts.
pub fn plan_bursts(addr: u64, len: u64, bus_bytes: usize) -> Vec<AddrBeat> {
    let bus = bus_bytes as u64;
    let size_log2 = bus_bytes.trailing_zeros() as u8;
    let mut out = Vec::new();
    let mut a = addr;
    let end = addr + len;
    while a < end {
        let to_page = (BOUNDARY_4K - a % BOUNDARY_4K) / bus;
        let beats = ((end - a) / bus).min(to_page).min(MAX_BURST_BEATS as u64);
        out.push(AddrBeat::incr(0, a, beats as usize, size_log2));
        a += beats * bus;
    }
    out
}

#[derive(Debug, Clone, Default)]
struct DmaRegs {
    busy: bool,
    done: bool,
    err: bool,
    addr: u64,
    len: u32,
}

impl DmaRegs {
    fn status(&self) -> u32 {
        (self.busy as u32 * STATUS_BUSY) | (self.done as u32 * STATUS_DONE) | (self.err as u32 * STATUS_ERR)
    }

    fn read(&self, offset: u32) -> Option<u32> {
        Some(match offset {
            CTRL => 0,
            STATUS => self.status(),
            ADDR_LO => self.addr as u32,
            ADDR_HI => (self.addr >> 32) as u32,
            LEN_BYTES => self.len,
            _ => return None,
        })
    }

    /// Applies a write; `Some(true)` when a transfer should start.
    fn write(&mut self, offset: u32, value: u32, bus: usize) -> Option<bool> {
        match offset {
            CTRL => {
                if value & 1 == 0 || self.busy {
                    return Some(false);
                }
                self.done = false;
                self.err = false;
                if !self.addr.is_multiple_of(bus as u64) || !(self.len as usize).is_multiple_of(bus) {
                    self.err = true;
                    return Some(false);
                }
                if self.len == 0 {
                    self.done = true;
                    return Some(false);
                }
                self.busy = true;
                return Some(true);
            }
            STATUS => {
                if value & STATUS_DONE != 0 {
                    self.done = false;
                }
            }
            ADDR_LO => self.addr = (self.addr & !0xFFFF_FFFF) | value as u64,
            ADDR_HI => self.addr = (self.addr & 0xFFFF_FFFF) | ((value as u64) << 32),
            LEN_BYTES => self.len = value,
            _ => return None,
        }
        Some(false)
    }

    fn finish(&mut self) {
        self.busy = false;
        self.done = true;
    }
}

/// Reads DDR through one manager port and emits the bytes as stream beats.
#[derive(Debug)]
pub struct Mm2sDma {
    name: String,
    regs: DmaRegs,
    port: AxiChannels,
    bus: usize,
    out: StreamOut,
    to_issue: VecDeque<AddrBeat>,
    pending_ar: Option<AddrBeat>,
    total: u64,
    received: u64,
    streamed: u64,
}

impl Mm2sDma {
    pub fn new(name: &str, port: AxiChannels, bus_bytes: usize, stream: ChannelId) -> Self {
        Self {
            name: name.to_string(),
            regs: DmaRegs::default(),
            port,
            bus: bus_bytes,
            out: StreamOut::new(stream, MM2S_FIFO_DEPTH),
            to_issue: VecDeque::new(),
            pending_ar: None,
            total: 0,
            received: 0,
            streamed: 0,
        }
    }

    pub fn status(&self) -> u32 {
        self.regs.status()
    }

    pub fn beats_streamed(&self) -> u64 {
        self.streamed
    }
}

impl HardwareProcess for Mm2sDma {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        let ch = self.port;
        if io.fired(ch.ar) {
            self.pending_ar = None;
        }
        if io.fired(ch.r) {
            if let Some(Beat::Data(d)) = io.payload(ch.r) {
                self.received += 1;
                let mut data = d.data.clone();
                data.resize(self.bus, 0);
                self.out.push(StreamBeat { data, last: self.received == self.total });
            }
        }
        if self.out.retire(io).is_some() {
            self.streamed += 1;
            if self.streamed == self.total {
                self.regs.finish();
            }
        }
        if self.pending_ar.is_none() {
            self.pending_ar = self.to_issue.pop_front();
        }
        io.drive(ch.ar, self.pending_ar.map(Beat::Addr));
        io.drive_ready(ch.r, self.regs.busy && self.out.has_room());
        self.out.drive(io);
    }

    fn read_register(&mut self, offset: u32) -> Option<u32> {
        self.regs.read(offset)
    }

    fn write_register(&mut self, offset: u32, value: u32) -> bool {
        match self.regs.write(offset, value, self.bus) {
            None => false,
            Some(start) => {
                if start {
                    self.to_issue = plan_bursts(self.regs.addr, self.regs.len as u64, self.bus).into();
                    self.total = self.regs.len as u64 / self.bus as u64;
                    self.received = 0;
                    self.streamed = 0;
                }
                true
            }
        }
    }

    fn diagnose(&self) -> Vec<String> {
        if !self.regs.busy {
            return Vec::new();
        }
        vec![format!(
            "MM2S busy: {} of {} beats received from memory, {} streamed out",
            self.received, self.total, self.streamed
        )]
    }

    fn probes(&self) -> Vec<Probe> {
        vec![Probe::new("status", 3), Probe::new("beats_streamed", 32), Probe::new("fifo_level", 4)]
    }

    fn sample_probes(&self, out: &mut Vec<u64>) {
        out.extend([self.regs.status() as u64, self.streamed & 0xFFFF_FFFF, self.out.len() as u64]);
    }
}

/// Consumes exactly LEN_BYTES of stream data and writes them to DDR.
/// Write addresses are issued up front; the stream's own `last` flag is
/// ignored, so an under-delivering producer leaves the engine busy forever.
#[derive(Debug)]
pub struct S2mmDma {
    name: String,
    regs: DmaRegs,
    port: AxiChannels,
    bus: usize,
    stream: ChannelId,
    w_buf: VecDeque<DataBeat>,
    to_issue: VecDeque<AddrBeat>,
    pending_aw: Option<AddrBeat>,
    burst_ends: VecDeque<u64>,
    total: u64,
    consumed: u64,
    bursts: u64,
    responses: u64,
}

impl S2mmDma {
    pub fn new(name: &str, port: AxiChannels, bus_bytes: usize, stream: ChannelId) -> Self {
        Self {
            name: name.to_string(),
            regs: DmaRegs::default(),
            port,
            bus: bus_bytes,
            stream,
            w_buf: VecDeque::new(),
            to_issue: VecDeque::new(),
            pending_aw: None,
            burst_ends: VecDeque::new(),
            total: 0,
            consumed: 0,
            bursts: 0,
            responses: 0,
        }
    }

    pub fn status(&self) -> u32 {
        self.regs.status()
    }

    pub fn beats_consumed(&self) -> u64 {
        self.consumed
    }
}

impl HardwareProcess for S2mmDma {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        let ch = self.port;
        if io.fired(ch.aw) {
            self.pending_aw = None;
        }
        if io.fired(ch.w) {
            self.w_buf.pop_front();
        }
        if io.fired(ch.b) {
            self.responses += 1;
            if self.regs.busy && self.responses == self.bursts {
                self.regs.finish();
            }
        }
        if io.fired(self.stream) {
            if let Some(Beat::Stream(s)) = io.payload(self.stream) {
                self.consumed += 1;
                let last = self.burst_ends.front() == Some(&self.consumed);
                if last {
                    self.burst_ends.pop_front();
                }
                let mut data = s.data.clone();
                data.resize(self.bus, 0);
                self.w_buf.push_back(DataBeat::write(data, last));
            }
        }
        if self.pending_aw.is_none() {
            self.pending_aw = self.to_issue.pop_front();
        }
        io.drive(ch.aw, self.pending_aw.map(Beat::Addr));
        io.drive(ch.w, self.w_buf.front().cloned().map(Beat::Data));
        io.drive_ready(ch.b, true);
        let take = self.regs.busy && self.consumed < self.total && self.w_buf.len() < S2MM_FIFO_DEPTH;
        io.drive_ready(self.stream, take);
    }

    fn read_register(&mut self, offset: u32) -> Option<u32> {
        self.regs.read(offset)
    }

    fn write_register(&mut self, offset: u32, value: u32) -> bool {
        match self.regs.write(offset, value, self.bus) {
            None => false,
            Some(start) => {
                if start {
                    let plan = plan_bursts(self.regs.addr, self.regs.len as u64, self.bus);
                    let mut end = 0;
                    self.burst_ends = plan
                        .iter()
                        .map(|b| {
                            end += b.beats() as u64;
                            end
                        })
                        .collect();
                    self.bursts = plan.len() as u64;
                    self.to_issue = plan.into();
                    self.total = self.regs.len as u64 / self.bus as u64;
                    self.consumed = 0;
                    self.responses = 0;
                }
                true
            }
        }
    }

    fn diagnose(&self) -> Vec<String> {
        if !self.regs.busy {
            return Vec::new();
        }
        vec![format!(
            "S2MM busy: {} of {} stream beats consumed, {} of {} write responses",
            self.consumed, self.total, self.responses, self.bursts
        )]
    }

    fn probes(&self) -> Vec<Probe> {
        vec![Probe::new("status", 3), Probe::new("beats_consumed", 32)]
    }

    fn sample_probes(&self, out: &mut Vec<u64>) {
        out.extend([self.regs.status() as u64, self.consumed & 0xFFFF_FFFF]);
    }
}
