// SPDX-License-Identifier: Apache-2.0

//! Weight-stationary systolic array with its controller, and the
//! partial-sum adder that follows it.
//!
//! Controller registers (offsets from the controller base):
//!
//! | offset | name     | access                                       |
//! |--------|----------|----------------------------------------------|
//! | 0x00   | GO       | bit0 starts a job (ignored while BUSY)       |
//! | 0x04   | DIMS_R_C | R in bits 7:0, C in bits 15:8                |
//! | 0x08   | DIMS_M   | number of input rows M                       |
//! | 0x0C   | STATUS   | bit0 BUSY, bit1 DONE (W1C), bit2 ERR         |
//!
//! A job first accepts R weight beats (beat r holds row r as C signed-8
//! lanes), then M input beats (beat m holds row m as R signed-8 lanes).
//! Output row m leaves L = R + C cycles after its input handshake as
//! ceil(C / 4) beats of signed-32 lanes, `last` on the row's final beat.

use std::collections::VecDeque;

use crate::kernel::{CycleIo, HardwareProcess, Probe};
use crate::signals::{Beat, ChannelId, StreamBeat};

use super::stream::{StreamIn, StreamOut};
use super::{STATUS_BUSY, STATUS_DONE, STATUS_ERR};

pub const GO: u32 = 0x00;
pub const DIMS_R_C: u32 = 0x04;
pub const DIMS_M: u32 = 0x08;
pub const CTRL_STATUS: u32 = 0x0C;
pub const CONTROLLER_WINDOW: u64 = 0x20;
pub const CONTROLLER_LATENCY: u32 = 2;
pub const MAX_DIM: usize = 16;
/// Signed-32 lanes per 16-byte beat.
pub const I32_LANES: usize = 4;

/// One multiply-accumulate step with 8-bit operands and a wrapping 32-bit
/// accumulator.
pub fn mac(acc: i32, a: i8, w: i8) -> i32 {
    acc.wrapping_add((a as i32) * (w as i32))
}

/// `a · W` for one input row.
pub fn row_product(a: &[i8], w: &[Vec<i8>], cols: usize) -> Vec<i32> {
    (0..cols).map(|c| a.iter().zip(w).fold(0i32, |acc, (&a, row)| mac(acc, a, row[c]))).collect()
}

/// Packs signed-32 lanes little-endian into `beats` beats of `bus` bytes.
pub fn pack_i32_row(row: &[i32], bus: usize) -> Vec<Vec<u8>> {
    let lanes = bus / 4;
    row.chunks(lanes)
        .map(|chunk| {
            let mut b = vec![0u8; bus];
            for (i, v) in chunk.iter().enumerate() {
                b[i * 4..i * 4 + 4].copy_from_slice(&v.to_le_bytes());
            }
            b
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Weights,
    Inputs,
}

/// Array controller plus the array itself.
#[derive(Debug)]
pub struct SystolicCore {
    name: String,
    max_rows: usize,
    max_cols: usize,
    bus: usize,
    weights_in: ChannelId,
    inputs_in: ChannelId,
    out: ChannelId,
    dims_rc: u32,
    dims_m: u32,
    busy: bool,
    done: bool,
    err: bool,
    phase: Phase,
    rows: usize,
    cols: usize,
    m: u64,
    w: Vec<Vec<i8>>,
    rows_in: u64,
    rows_out: u64,
    inflight: VecDeque<(u64, Vec<i32>)>,
    ready_rows: VecDeque<Vec<Vec<u8>>>,
    beat_idx: usize,
}

impl SystolicCore {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        max_rows: usize,
        max_cols: usize,
        bus_bytes: usize,
        weights_in: ChannelId,
        inputs_in: ChannelId,
        out: ChannelId,
    ) -> Self {
        Self {
            name: name.to_string(),
            max_rows,
            max_cols,
            bus: bus_bytes,
            weights_in,
            inputs_in,
            out,
            dims_rc: 0,
            dims_m: 0,
            busy: false,
            done: false,
            err: false,
            phase: Phase::Idle,
            rows: 0,
            cols: 0,
            m: 0,
            w: Vec::new(),
            rows_in: 0,
            rows_out: 0,
            inflight: VecDeque::new(),
            ready_rows: VecDeque::new(),
            beat_idx: 0,
        }
    }

    /// Pipeline depth in cycles.
    pub fn latency(&self) -> u64 {
        (self.rows + self.cols) as u64
    }

    fn capacity(&self) -> usize {
        self.latency() as usize + 2
    }

    pub fn status(&self) -> u32 {
        (self.busy as u32 * STATUS_BUSY) | (self.done as u32 * STATUS_DONE) | (self.err as u32 * STATUS_ERR)
    }

    fn go(&mut self) {
        if self.busy {
            return;
        }
        self.done = false;
        self.err = false;
        let r = (self.dims_rc & 0xFF) as usize;
        let c = ((self.dims_rc >> 8) & 0xFF) as usize;
        let m = self.dims_m as u64;
        if !(1..=self.max_rows).contains(&r) || !(1..=self.max_cols).contains(&c) || m == 0 {
            self.err = true;
            return;
        }
        self.rows = r;
        self.cols = c;
        self.m = m;
        self.w = vec![vec![0; c]; r];
        self.rows_in = 0;
        self.rows_out = 0;
        self.inflight.clear();
        self.ready_rows.clear();
        self.beat_idx = 0;
        self.busy = true;
        self.phase = Phase::Weights;
    }
}

fn lanes(beat: Option<&Beat>, n: usize) -> Vec<i8> {
    let data = match beat {
        Some(Beat::Stream(s)) => s.data.as_slice(),
        _ => &[],
    };
    (0..n).map(|i| data.get(i).copied().unwrap_or(0) as i8).collect()
}

impl HardwareProcess for SystolicCore {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        let t = io.cycle();
        if io.fired(self.weights_in) && self.phase == Phase::Weights {
            let idx = self.rows_in as usize;
            self.w[idx] = lanes(io.payload(self.weights_in), self.cols);
            self.rows_in += 1;
            if self.rows_in as usize == self.rows {
                self.rows_in = 0;
                self.phase = Phase::Inputs;
            }
        } else if io.fired(self.inputs_in) && self.phase == Phase::Inputs {
            let a = lanes(io.payload(self.inputs_in), self.rows);
            let row = row_product(&a, &self.w, self.cols);
            self.inflight.push_back((t + self.latency(), row));
            self.rows_in += 1;
        }
        if io.fired(self.out) {
            self.beat_idx += 1;
            if self.beat_idx == self.ready_rows.front().map_or(0, |r| r.len()) {
                self.ready_rows.pop_front();
                self.beat_idx = 0;
                self.rows_out += 1;
                if self.rows_out == self.m {
                    self.busy = false;
                    self.done = true;
                    self.phase = Phase::Idle;
                }
            }
        }
        while self.inflight.front().is_some_and(|(at, _)| *at <= t + 1) {
            let (_, row) = self.inflight.pop_front().expect("front");
            self.ready_rows.push_back(pack_i32_row(&row, self.bus));
        }

        let out = self.ready_rows.front().map(|beats| {
            Beat::Stream(StreamBeat { data: beats[self.beat_idx].clone(), last: self.beat_idx + 1 == beats.len() })
        });
        io.drive(self.out, out);
        let occupancy = self.inflight.len() + self.ready_rows.len();
        io.drive_ready(self.weights_in, self.phase == Phase::Weights);
        io.drive_ready(
            self.inputs_in,
            self.phase == Phase::Inputs && self.rows_in < self.m && occupancy < self.capacity(),
        );
    }

    fn read_register(&mut self, offset: u32) -> Option<u32> {
        Some(match offset {
            GO => 0,
            DIMS_R_C => self.dims_rc,
            DIMS_M => self.dims_m,
            CTRL_STATUS => self.status(),
            _ => return None,
        })
    }

    fn write_register(&mut self, offset: u32, value: u32) -> bool {
        match offset {
            GO => {
                if value & 1 == 1 {
                    self.go();
                }
            }
            DIMS_R_C => self.dims_rc = value & 0xFFFF,
            DIMS_M => self.dims_m = value,
            CTRL_STATUS => {
                if value & STATUS_DONE != 0 {
                    self.done = false;
                }
            }
            _ => return false,
        }
        true
    }

    fn diagnose(&self) -> Vec<String> {
        match self.phase {
            Phase::Idle => Vec::new(),
            Phase::Weights => vec![format!("array loading weights: {} of {} rows", self.rows_in, self.rows)],
            Phase::Inputs => vec![format!(
                "array streaming: {} of {} input rows accepted, {} rows emitted",
                self.rows_in, self.m, self.rows_out
            )],
        }
    }

    fn probes(&self) -> Vec<Probe> {
        vec![
            Probe::new("status", 3),
            Probe::new("phase", 2),
            Probe::new("rows_in", 32),
            Probe::new("rows_out", 32),
            Probe::new("occupancy", 8),
        ]
    }

    fn sample_probes(&self, out: &mut Vec<u64>) {
        let phase = match self.phase {
            Phase::Idle => 0,
            Phase::Weights => 1,
            Phase::Inputs => 2,
        };
        out.extend([
            self.status() as u64,
            phase,
            self.rows_in & 0xFFFF_FFFF,
            self.rows_out & 0xFFFF_FFFF,
            ((self.inflight.len() + self.ready_rows.len()) as u64).min(255),
        ]);
    }
}

/// Adds the partial-sum stream to the array output lane by lane.
#[derive(Debug)]
pub struct PsumAdder {
    name: String,
    array_in: StreamIn,
    psum_in: StreamIn,
    out: StreamOut,
    beats: u64,
}

impl PsumAdder {
    pub fn new(name: &str, array_in: ChannelId, psum_in: ChannelId, out: ChannelId) -> Self {
        Self {
            name: name.to_string(),
            array_in: StreamIn::new(array_in, 2),
            psum_in: StreamIn::new(psum_in, 2),
            out: StreamOut::new(out, 2),
            beats: 0,
        }
    }
}

impl HardwareProcess for PsumAdder {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        self.array_in.accept(io);
        self.psum_in.accept(io);
        self.out.retire(io);
        if !self.array_in.is_empty() && !self.psum_in.is_empty() && self.out.has_room() {
            let a = self.array_in.pop().expect("array beat");
            let p = self.psum_in.pop().expect("psum beat");
            let data = a
                .data
                .chunks(4)
                .zip(p.data.chunks(4))
                .flat_map(|(x, y)| {
                    let x = i32::from_le_bytes(x.try_into().expect("4-byte lane"));
                    let y = i32::from_le_bytes(y.try_into().expect("4-byte lane"));
                    x.wrapping_add(y).to_le_bytes()
                })
                .collect();
            self.out.push(StreamBeat { data, last: a.last });
            self.beats += 1;
        }
        self.array_in.drive_ready(io, true);
        self.psum_in.drive_ready(io, true);
        self.out.drive(io);
    }

    fn diagnose(&self) -> Vec<String> {
        match (self.array_in.is_empty(), self.psum_in.is_empty()) {
            (false, true) => vec!["adder holding array beats, waiting for partial sums".into()],
            (true, false) => vec!["adder holding partial sums, waiting for array output".into()],
            _ => Vec::new(),
        }
    }

    fn probes(&self) -> Vec<Probe> {
        vec![Probe::new("beats", 32)]
    }

    fn sample_probes(&self, out: &mut Vec<u64>) {
        out.push(self.beats & 0xFFFF_FFFF);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_product() {
        assert_eq!(row_product(&[3], &[vec![2]], 1), vec![6]);
    }

    #[test]
    fn two_by_two_with_psum() {
        let w = vec![vec![1, 2], vec![3, 4]];
        let o: Vec<i32> = row_product(&[5, 6], &w, 2).iter().zip([10, 20]).map(|(x, p)| x + p).collect();
        assert_eq!(o, vec![33, 54]);
    }

    #[test]
    fn wrapping_accumulation() {
        let n: u64 = 1 << 26;
        let mut acc = 0i32;
        for _ in 0..n {
            acc = mac(acc, 127, -128);
        }
        let exact: i128 = 127 * -128 * n as i128;
        let wrapped = exact.rem_euclid(1i128 << 32) as u32 as i32;
        assert_eq!(acc, wrapped);
    }

    #[test]
    fn lane_packing() {
        let beats = pack_i32_row(&[1, -1, 2, 3, 4], 16);
        assert_eq!(beats.len(), 2);
        assert_eq!(&beats[0][4..8], &(-1i32).to_le_bytes());
        assert_eq!(&beats[1][0..4], &4i32.to_le_bytes());
        assert_eq!(&beats[1][4..16], &[0u8; 12]);
    }
}
