// SPDX-License-Identifier: Apache-2.0

//! Scratch register block used for smoke tests.

use crate::kernel::{CycleIo, HardwareProcess, Probe};

pub const REGFILE_LATENCY: u32 = 1;
/// Decoded window; offsets past `4 * n_regs` are decode errors.
pub const REGFILE_WINDOW: u64 = 0x100;
pub const MAX_REGS: usize = (REGFILE_WINDOW / 4) as usize;

#[derive(Debug, Clone)]
pub struct RegisterFile {
    name: String,
    regs: Vec<u32>,
}

impl RegisterFile {
    /// `n_regs` must be in `1..=MAX_REGS`.
    pub fn new(name: &str, n_regs: usize) -> Option<Self> {
        (1..=MAX_REGS).contains(&n_regs).then(|| Self { name: name.to_string(), regs: vec![0; n_regs] })
    }

    pub fn regs(&self) -> &[u32] {
        &self.regs
    }
}

impl HardwareProcess for RegisterFile {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, _io: &mut CycleIo<'_>) {}

    fn read_register(&mut self, offset: u32) -> Option<u32> {
        self.regs.get((offset / 4) as usize).copied()
    }

    fn write_register(&mut self, offset: u32, value: u32) -> bool {
        match self.regs.get_mut((offset / 4) as usize) {
            Some(r) => {
                *r = value;
                true
            }
            None => false,
        }
    }

    fn probes(&self) -> Vec<Probe> {
        (0..self.regs.len()).map(|i| Probe::new(format!("r{i}"), 32)).collect()
    }

    fn sample_probes(&self, out: &mut Vec<u64>) {
        out.extend(self.regs.iter().map(|&r| r as u64));
    }
}
