// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use cosim_core::axi::AddrBeat;
use cosim_core::kernel::{CycleIo, HardwareProcess};
use cosim_core::signals::{AxiChannels, Beat, ChannelId, StreamBeat};

pub type Beats = Arc<Mutex<Vec<(u64, StreamBeat)>>>;

/// Always-ready stream sink that keeps every beat it accepts.
pub struct Collector {
    pub ch: ChannelId,
    pub beats: Beats,
}

impl Collector {
    pub fn new(ch: ChannelId) -> (Self, Beats) {
        let beats = Arc::new(Mutex::new(Vec::new()));
        (Self { ch, beats: beats.clone() }, beats)
    }
}

impl HardwareProcess for Collector {
    fn name(&self) -> &str {
        "collector"
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        if io.fired(self.ch) {
            if let Some(Beat::Stream(b)) = io.payload(self.ch) {
                self.beats.lock().unwrap().push((io.cycle(), b.clone()));
            }
        }
        io.drive_ready(self.ch, true);
    }
}

/// Issues one read burst at cycle 0 and accepts R beats unconditionally.
pub struct OneRead {
    pub port: AxiChannels,
    pub ar: Option<AddrBeat>,
}

impl HardwareProcess for OneRead {
    fn name(&self) -> &str {
        "one_read"
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        if io.fired(self.port.ar) {
            self.ar = None;
        }
        io.drive(self.port.ar, self.ar.map(Beat::Addr));
        io.drive_ready(self.port.r, true);
    }
}

/// Brute-force `A*W + P` with wrapping 32-bit accumulation.
pub fn oracle(a: &[Vec<i8>], w: &[Vec<i8>], p: &[Vec<i32>]) -> Vec<Vec<i32>> {
    let c = w.first().map_or(0, |r| r.len());
    a.iter()
        .zip(p)
        .map(|(arow, prow)| {
            (0..c)
                .map(|j| {
                    let mut acc = prow[j] as i64;
                    for (k, &x) in arow.iter().enumerate() {
                        acc += x as i64 * w[k][j] as i64;
                    }
                    acc as i32
                })
                .collect()
        })
        .collect()
}
