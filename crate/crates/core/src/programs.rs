// SPDX-License-Identifier: Apache-2.0

//! Builtin firmware programs and the driver helpers they share.
//!
//! DDR layout used by the matmul drivers:
//!
//! | address  | contents                                             |
//! |----------|------------------------------------------------------|
//! | 0x10000  | W, R rows of C int8 lanes, each row padded to 16 B    |
//! | 0x20000  | A, M rows of R int8 lanes, each row padded to 16 B    |
//! | 0x30000  | P, M rows of C int32 lanes, ceil(C/4) * 16 B per row  |
//! | 0x40000  | O, same shape as P                                    |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dut::dma::{ADDR_HI, ADDR_LO, CTRL, LEN_BYTES, STATUS};
use crate::dut::soc::{CONTROLLER, INPUT_DMA, OUTPUT_DMA, PSUM_DMA, REGFILE_BASE, SINK_COUNTERS, SOC_BUS_BYTES, WEIGHTS_DMA};
use crate::dut::stream::pattern_byte;
use crate::dut::systolic::{CTRL_STATUS, DIMS_M, DIMS_R_C, GO};
use crate::dut::{STATUS_BUSY, STATUS_DONE, STATUS_ERR};
use crate::firmware::{FirmwareContext, RegFault};

pub const W_ADDR: u64 = 0x10000;
pub const A_ADDR: u64 = 0x20000;
pub const P_ADDR: u64 = 0x30000;
pub const O_ADDR: u64 = 0x40000;
/// Ping-pong activation buffers.
pub const PING_ADDR: u64 = 0x20000;
pub const PONG_ADDR: u64 = 0x28000;

const ROW_BYTES: u64 = SOC_BUS_BYTES as u64;

/// Firmware exit codes.
pub const EXIT_OK: u32 = 0;
pub const EXIT_MISMATCH: u32 = 1;
pub const EXIT_HW_ERROR: u32 = 2;
pub const EXIT_BUS_FAULT: u32 = 3;

/// Starts a DMA transfer.
pub fn dma_start(ctx: &FirmwareContext, base: u64, addr: u64, len: u32) -> Result<(), RegFault> {
    ctx.fb_write_32(base + ADDR_LO as u64, addr as u32)?;
    ctx.fb_write_32(base + ADDR_HI as u64, (addr >> 32) as u32)?;
    ctx.fb_write_32(base + LEN_BYTES as u64, len)?;
    ctx.fb_write_32(base + CTRL as u64, 1)
}

/// Polls a STATUS register until BUSY clears, then clears DONE. Returns the
/// status seen.
pub fn wait_idle(ctx: &FirmwareContext, status_addr: u64) -> Result<u32, RegFault> {
    let s = ctx.poll_until(status_addr, STATUS_BUSY, 0)?;
    if s & STATUS_DONE != 0 {
        ctx.fb_write_32(status_addr, STATUS_DONE)?;
    }
    Ok(s)
}

/// One matrix product O = A·W + P.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatmulJob {
    pub a: Vec<Vec<i8>>,
    pub w: Vec<Vec<i8>>,
    pub p: Vec<Vec<i32>>,
}

impl MatmulJob {
    pub fn random(rng: &mut impl Rng, m: usize, r: usize, c: usize) -> Self {
        let a = (0..m).map(|_| (0..r).map(|_| rng.gen()).collect()).collect();
        let w = (0..r).map(|_| (0..c).map(|_| rng.gen()).collect()).collect();
        let p = (0..m).map(|_| (0..c).map(|_| rng.gen()).collect()).collect();
        Self { a, w, p }
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn r(&self) -> usize {
        self.w.len()
    }

    pub fn c(&self) -> usize {
        self.w.first().map_or(0, |row| row.len())
    }

    /// Bytes per int32 row in DDR.
    pub fn out_row_bytes(&self) -> u64 {
        (self.c() as u64).div_ceil(4) * ROW_BYTES
    }

    pub fn out_bytes(&self) -> u64 {
        self.m() as u64 * self.out_row_bytes()
    }

    /// The firmware's own host-side loop.
    pub fn expected(&self) -> Vec<Vec<i32>> {
        let mut out = self.p.clone();
        for (m, row) in out.iter_mut().enumerate() {
            for (c, o) in row.iter_mut().enumerate() {
                for r in 0..self.r() {
                    *o = o.wrapping_add(self.a[m][r] as i32 * self.w[r][c] as i32);
                }
            }
        }
        out
    }
}

fn pad_i8(row: &[i8]) -> Vec<u8> {
    let mut b = vec![0u8; ROW_BYTES as usize];
    for (i, v) in row.iter().enumerate() {
        b[i] = *v as u8;
    }
    b
}

fn pack_i32(row: &[i32], row_bytes: u64) -> Vec<u8> {
    let mut b = vec![0u8; row_bytes as usize];
    for (i, v) in row.iter().enumerate() {
        b[i * 4..i * 4 + 4].copy_from_slice(&v.to_le_bytes());
    }
    b
}

/// Writes W and P, and A at `a_addr`.
pub fn stage_job(ctx: &FirmwareContext, job: &MatmulJob, a_addr: u64) {
    for (i, row) in job.w.iter().enumerate() {
        ctx.fb_mem_write(W_ADDR + i as u64 * ROW_BYTES, &pad_i8(row));
    }
    stage_activations(ctx, &job.a, a_addr);
    let rb = job.out_row_bytes();
    for (i, row) in job.p.iter().enumerate() {
        ctx.fb_mem_write(P_ADDR + i as u64 * rb, &pack_i32(row, rb));
    }
}

pub fn stage_activations(ctx: &FirmwareContext, a: &[Vec<i8>], addr: u64) {
    for (i, row) in a.iter().enumerate() {
        ctx.fb_mem_write(addr + i as u64 * ROW_BYTES, &pad_i8(row));
    }
}

pub fn read_output(ctx: &FirmwareContext, m: usize, c: usize) -> Vec<Vec<i32>> {
    let rb = (c as u64).div_ceil(4) * ROW_BYTES;
    (0..m)
        .map(|i| {
            let bytes = ctx.fb_mem_read(O_ADDR + i as u64 * rb, rb as usize);
            bytes[..c * 4].chunks(4).map(|x| i32::from_le_bytes(x.try_into().expect("lane"))).collect()
        })
        .collect()
}

/// Programs the controller and all four DMAs for one job whose inputs are
/// already in DDR, then waits for the output DMA. `extra_out_bytes` is
/// added to the output length (non-zero only to reproduce a hang).
pub fn launch_matmul(
    ctx: &FirmwareContext,
    m: usize,
    r: usize,
    c: usize,
    a_addr: u64,
    extra_out_bytes: u32,
) -> Result<u32, RegFault> {
    let out_row = (c as u64).div_ceil(4) * ROW_BYTES;
    let out_len = (m as u64 * out_row) as u32;
    ctx.fb_write_32(CONTROLLER + DIMS_R_C as u64, (r as u32) | ((c as u32) << 8))?;
    ctx.fb_write_32(CONTROLLER + DIMS_M as u64, m as u32)?;
    ctx.fb_write_32(CONTROLLER + GO as u64, 1)?;
    let st = ctx.fb_read_32(CONTROLLER + CTRL_STATUS as u64)?;
    if st & STATUS_ERR != 0 {
        return Ok(st);
    }
    dma_start(ctx, OUTPUT_DMA, O_ADDR, out_len + extra_out_bytes)?;
    dma_start(ctx, PSUM_DMA, P_ADDR, out_len)?;
    dma_start(ctx, WEIGHTS_DMA, W_ADDR, (r as u64 * ROW_BYTES) as u32)?;
    dma_start(ctx, INPUT_DMA, a_addr, (m as u64 * ROW_BYTES) as u32)?;
    let mut status = wait_idle(ctx, OUTPUT_DMA + STATUS as u64)?;
    for base in [WEIGHTS_DMA, INPUT_DMA, PSUM_DMA] {
        status |= wait_idle(ctx, base + STATUS as u64)?;
    }
    status |= wait_idle(ctx, CONTROLLER + CTRL_STATUS as u64)?;
    Ok(status)
}

/// Parameters of the builtin programs. Unused fields are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirmwareParams {
    /// Matmul dimensions; `r` and `c` default to the array size.
    pub m: u32,
    pub r: Option<u32>,
    pub c: Option<u32>,
    /// Beats the hang reproducer adds to the output length.
    pub deficit_beats: u32,
    /// Ping-pong layers and the cycle spacing of their start times.
    pub layers: u32,
    pub layer_period_cycles: u64,
    /// Per-DMA transfer size of the stress program.
    pub transfer_bytes: u32,
}

impl Default for FirmwareParams {
    fn default() -> Self {
        Self {
            m: 8,
            r: None,
            c: None,
            deficit_beats: 1,
            layers: 8,
            layer_period_cycles: 2048,
            transfer_bytes: 0x1_0000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    Matmul,
    HangReproducer,
    PingPong,
    RegfileSmoke,
    DmaStress,
}

impl Builtin {
    pub const ALL: [Builtin; 5] =
        [Builtin::Matmul, Builtin::HangReproducer, Builtin::PingPong, Builtin::RegfileSmoke, Builtin::DmaStress];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Matmul => "matmul",
            Builtin::HangReproducer => "hang-reproducer",
            Builtin::PingPong => "ping-pong",
            Builtin::RegfileSmoke => "regfile-smoke",
            Builtin::DmaStress => "dma-stress",
        }
    }
}

fn fault_exit(r: Result<u32, RegFault>) -> u32 {
    r.unwrap_or(EXIT_BUS_FAULT)
}

/// Matmul with random operands drawn from the run seed, checked against
/// the host loop.
pub fn matmul(ctx: &FirmwareContext, m: usize, r: usize, c: usize) -> u32 {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let job = MatmulJob::random(&mut rng, m, r, c);
    stage_job(ctx, &job, A_ADDR);
    fault_exit((|| {
        let st = launch_matmul(ctx, m, r, c, A_ADDR, 0)?;
        if st & STATUS_ERR != 0 {
            return Ok(EXIT_HW_ERROR);
        }
        Ok(if read_output(ctx, m, c) == job.expected() { EXIT_OK } else { EXIT_MISMATCH })
    })())
}

/// Matmul whose output DMA is told to expect `deficit` more beats than the
/// array produces. Never returns under a correct kernel.
pub fn hang_reproducer(ctx: &FirmwareContext, m: usize, r: usize, c: usize, deficit: u32) -> u32 {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let job = MatmulJob::random(&mut rng, m, r, c);
    stage_job(ctx, &job, A_ADDR);
    fault_exit(launch_matmul(ctx, m, r, c, A_ADDR, deficit * ROW_BYTES as u32).map(|_| EXIT_OK))
}

fn requantize(row: &[i32], r: usize) -> Vec<i8> {
    (0..r).map(|i| (row.get(i).copied().unwrap_or(0) >> 8).clamp(-128, 127) as i8).collect()
}

/// Square layers alternating between two activation buffers: layer `l`
/// reads one buffer and its requantized output becomes the next layer's
/// input in the other. Layer `l` starts at cycle `l * period`.
pub fn ping_pong(ctx: &FirmwareContext, m: usize, n: usize, layers: u32, period: u64) -> u32 {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let mut job = MatmulJob::random(&mut rng, m, n, n);
    for row in &mut job.p {
        row.fill(0);
    }
    stage_job(ctx, &job, PING_ADDR);
    let mut host = job.a.clone();
    let mut ok = true;
    for l in 0..layers as u64 {
        let now = ctx.fb_cycle_count();
        if now < l * period {
            ctx.fb_wait_cycles(l * period - now);
        }
        let (src, dst) = if l % 2 == 0 { (PING_ADDR, PONG_ADDR) } else { (PONG_ADDR, PING_ADDR) };
        match launch_matmul(ctx, m, n, n, src, 0) {
            Ok(st) if st & STATUS_ERR == 0 => {}
            Ok(_) => return EXIT_HW_ERROR,
            Err(_) => return EXIT_BUS_FAULT,
        }
        let out = read_output(ctx, m, n);
        let step = MatmulJob { a: host.clone(), w: job.w.clone(), p: job.p.clone() };
        ok &= out == step.expected();
        let next: Vec<Vec<i8>> = out.iter().map(|row| requantize(row, n)).collect();
        stage_activations(ctx, &next, dst);
        host = next;
    }
    if ok {
        EXIT_OK
    } else {
        EXIT_MISMATCH
    }
}

/// Writes distinct values to every scratch register and reads them back.
pub fn regfile_smoke(ctx: &FirmwareContext, n_regs: usize) -> u32 {
    fault_exit((|| {
        for i in 0..n_regs as u64 {
            ctx.fb_write_32(REGFILE_BASE + 4 * i, 0xA5A5_0000 ^ (i as u32).wrapping_mul(0x9E37_79B9))?;
        }
        for i in 0..n_regs as u64 {
            if ctx.fb_read_32(REGFILE_BASE + 4 * i)? != 0xA5A5_0000 ^ (i as u32).wrapping_mul(0x9E37_79B9) {
                return Ok(EXIT_MISMATCH);
            }
        }
        Ok(EXIT_OK)
    })())
}

/// Source regions of the stress program's readers and the S2MM target.
pub const STRESS_WEIGHTS: u64 = 0x10_0000;
pub const STRESS_INPUT: u64 = 0x20_0000;
pub const STRESS_PSUM: u64 = 0x30_0000;
pub const STRESS_OUTPUT: u64 = 0x40_0000;

/// Runs all four DMAs of the bench at once with `len` bytes each, then
/// checks the sink counters and the written pattern.
pub fn dma_stress(ctx: &FirmwareContext, len: u32) -> u32 {
    fault_exit((|| {
        dma_start(ctx, OUTPUT_DMA, STRESS_OUTPUT, len)?;
        dma_start(ctx, PSUM_DMA, STRESS_PSUM, len)?;
        dma_start(ctx, WEIGHTS_DMA, STRESS_WEIGHTS, len)?;
        dma_start(ctx, INPUT_DMA, STRESS_INPUT, len)?;
        let mut status = 0;
        for base in [INPUT_DMA, WEIGHTS_DMA, PSUM_DMA, OUTPUT_DMA] {
            status |= wait_idle(ctx, base + STATUS as u64)?;
        }
        if status & STATUS_ERR != 0 {
            return Ok(EXIT_HW_ERROR);
        }
        for i in 0..3 {
            if ctx.fb_read_32(SINK_COUNTERS + 4 * i)? != len {
                return Ok(EXIT_MISMATCH);
            }
        }
        let written = ctx.fb_mem_read(STRESS_OUTPUT, len as usize);
        let ok = written.iter().enumerate().all(|(i, &b)| b == pattern_byte(i as u64));
        Ok(if ok { EXIT_OK } else { EXIT_MISMATCH })
    })())
}
