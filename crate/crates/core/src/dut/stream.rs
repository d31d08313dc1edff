// SPDX-License-Identifier: Apache-2.0

//! Stream FIFOs and simple stream endpoints.

use std::collections::VecDeque;

use crate::kernel::{CycleIo, HardwareProcess, Probe};
use crate::signals::{Beat, ChannelId, StreamBeat};

/// Consumer side of a stream channel with a bounded input FIFO.
#[derive(Debug, Clone)]
pub struct StreamIn {
    pub ch: ChannelId,
    buf: VecDeque<StreamBeat>,
    depth: usize,
}

impl StreamIn {
    pub fn new(ch: ChannelId, depth: usize) -> Self {
        Self { ch, buf: VecDeque::with_capacity(depth), depth }
    }

    /// Captures a beat if the handshake completed this cycle.
    pub fn accept(&mut self, io: &CycleIo<'_>) -> bool {
        if io.fired(self.ch) {
            if let Some(Beat::Stream(b)) = io.payload(self.ch) {
                self.buf.push_back(b.clone());
                return true;
            }
        }
        false
    }

    /// READY for next cycle: room left and `enable`.
    pub fn drive_ready(&self, io: &mut CycleIo<'_>, enable: bool) {
        io.drive_ready(self.ch, enable && self.buf.len() < self.depth);
    }

    pub fn front(&self) -> Option<&StreamBeat> {
        self.buf.front()
    }

    pub fn pop(&mut self) -> Option<StreamBeat> {
        self.buf.pop_front()
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }
}

/// Producer side of a stream channel with a bounded output FIFO. The front
/// beat is presented until accepted.
#[derive(Debug, Clone)]
pub struct StreamOut {
    pub ch: ChannelId,
    buf: VecDeque<StreamBeat>,
    depth: usize,
}

impl StreamOut {
    pub fn new(ch: ChannelId, depth: usize) -> Self {
        Self { ch, buf: VecDeque::with_capacity(depth), depth }
    }

    /// Drops the front beat if the handshake completed this cycle.
    pub fn retire(&mut self, io: &CycleIo<'_>) -> Option<StreamBeat> {
        if io.fired(self.ch) {
            self.buf.pop_front()
        } else {
            None
        }
    }

    pub fn has_room(&self) -> bool {
        self.buf.len() < self.depth
    }

    pub fn push(&mut self, beat: StreamBeat) {
        debug_assert!(self.has_room());
        self.buf.push_back(beat);
    }

    pub fn drive(&self, io: &mut CycleIo<'_>) {
        io.drive(self.ch, self.buf.front().cloned().map(Beat::Stream));
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

/// Pattern byte `i` of a [`StreamSource`].
pub fn pattern_byte(i: u64) -> u8 {
    (i.wrapping_mul(31).wrapping_add(7)) as u8
}

/// Emits a deterministic byte pattern, optionally stopping after `limit`
/// bytes.
#[derive(Debug)]
pub struct StreamSource {
    name: String,
    out: StreamOut,
    width: usize,
    limit: Option<u64>,
    produced: u64,
}

impl StreamSource {
    pub fn new(name: &str, ch: ChannelId, width: usize, limit: Option<u64>) -> Self {
        Self { name: name.to_string(), out: StreamOut::new(ch, 2), width, limit, produced: 0 }
    }

    pub fn produced(&self) -> u64 {
        self.produced
    }
}

impl HardwareProcess for StreamSource {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        self.out.retire(io);
        let room = self.limit.map_or(u64::MAX, |l| l - self.produced);
        if self.out.has_room() && room > 0 {
            let n = (self.width as u64).min(room);
            let data = (0..self.width as u64)
                .map(|i| if i < n { pattern_byte(self.produced + i) } else { 0 })
                .collect();
            self.produced += n;
            let last = self.limit == Some(self.produced);
            self.out.push(StreamBeat { data, last });
        }
        self.out.drive(io);
    }
}

/// Always-ready stream sinks with byte counters readable as registers
/// (`+4*i` for input `i`).
#[derive(Debug)]
pub struct SinkBank {
    name: String,
    inputs: Vec<ChannelId>,
    counts: Vec<u64>,
}

impl SinkBank {
    pub fn new(name: &str, inputs: Vec<ChannelId>) -> Self {
        let n = inputs.len();
        Self { name: name.to_string(), inputs, counts: vec![0; n] }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

impl HardwareProcess for SinkBank {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        for (i, &ch) in self.inputs.iter().enumerate() {
            if io.fired(ch) {
                if let Some(Beat::Stream(b)) = io.payload(ch) {
                    self.counts[i] += b.data.len() as u64;
                }
            }
            io.drive_ready(ch, true);
        }
    }

    fn read_register(&mut self, offset: u32) -> Option<u32> {
        self.counts.get((offset / 4) as usize).map(|&c| c as u32)
    }

    fn probes(&self) -> Vec<Probe> {
        (0..self.counts.len()).map(|i| Probe::new(format!("bytes{i}"), 32)).collect()
    }

    fn sample_probes(&self, out: &mut Vec<u64>) {
        out.extend(self.counts.iter().map(|&c| c & 0xFFFF_FFFF));
    }
}
