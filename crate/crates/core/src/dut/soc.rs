// SPDX-License-Identifier: Apache-2.0

//! Assemblies of the reference blocks and their memory maps.
//!
//! Systolic SoC (bus width 16 bytes):
//!
//! | base   | block                   | manager port |
//! |--------|-------------------------|--------------|
//! | 0x0000 | weights MM2S            | `weights`    |
//! | 0x1000 | input MM2S              | `input`      |
//! | 0x2000 | partial-sum MM2S        | `psum`       |
//! | 0x3000 | output S2MM             | `output`     |
//! | 0x4000 | array controller        |              |
//!
//! Streams: weights and input feed the array, the array output and the
//! partial-sum stream feed the adder, the adder feeds the output S2MM.

use serde::Serialize;

use crate::bridge::RegisterPort;
use crate::congestion::CongestionProfile;
use crate::kernel::{Kernel, KernelError, ProcessId};
use crate::signals::AxiChannels;

use super::dma::{self, Mm2sDma, S2mmDma, DMA_LATENCY, DMA_WINDOW};
use super::regfile::{RegisterFile, REGFILE_LATENCY, REGFILE_WINDOW};
use super::stream::{SinkBank, StreamSource};
use super::systolic::{self, PsumAdder, SystolicCore, CONTROLLER_LATENCY, CONTROLLER_WINDOW, MAX_DIM};

pub const SOC_BUS_BYTES: usize = 16;
pub const WEIGHTS_DMA: u64 = 0x0000;
pub const INPUT_DMA: u64 = 0x1000;
pub const PSUM_DMA: u64 = 0x2000;
pub const OUTPUT_DMA: u64 = 0x3000;
pub const CONTROLLER: u64 = 0x4000;
/// Sink byte counters of the DMA bench.
pub const SINK_COUNTERS: u64 = 0x5000;
pub const SINK_LATENCY: u32 = 1;
pub const REGFILE_BASE: u64 = 0x0000;

#[derive(Debug, Clone)]
pub struct SocHandles {
    pub ports: Vec<(String, AxiChannels)>,
    pub processes: Vec<(String, ProcessId)>,
}

impl SocHandles {
    pub fn process(&self, name: &str) -> Option<ProcessId> {
        self.processes.iter().find(|(n, _)| n == name).map(|(_, id)| *id)
    }
}

fn window(name: &str, base: u64, len: u64, latency: u32) -> RegisterPort {
    RegisterPort { name: name.to_string(), base, len, latency }
}

pub fn build_register_file(k: &mut Kernel, n_regs: usize) -> Result<SocHandles, KernelError> {
    let rf = RegisterFile::new("regfile", n_regs)
        .ok_or_else(|| KernelError::Config(format!("register file needs 1..={} registers", super::regfile::MAX_REGS)))?;
    let id = k.register_process(Box::new(rf))?;
    k.map_registers(id, window("regfile", REGFILE_BASE, REGFILE_WINDOW, REGFILE_LATENCY))?;
    Ok(SocHandles { ports: Vec::new(), processes: vec![("regfile".into(), id)] })
}

/// Weights, input and psum MM2S engines, shared by both assemblies.
fn readers(
    k: &mut Kernel,
    congestion: CongestionProfile,
    h: &mut SocHandles,
) -> Result<[crate::signals::ChannelId; 3], KernelError> {
    let mut streams = Vec::new();
    for (port, base) in [("weights", WEIGHTS_DMA), ("input", INPUT_DMA), ("psum", PSUM_DMA)] {
        let ch = k.add_manager_port(port, SOC_BUS_BYTES, congestion)?;
        let s = k.add_stream(&format!("{port}_stream"), SOC_BUS_BYTES)?;
        let name = format!("{port}_dma");
        let id = k.register_process(Box::new(Mm2sDma::new(&name, ch, SOC_BUS_BYTES, s)))?;
        k.map_registers(id, window(&name, base, DMA_WINDOW, DMA_LATENCY))?;
        h.ports.push((port.into(), ch));
        h.processes.push((name, id));
        streams.push(s);
    }
    Ok([streams[0], streams[1], streams[2]])
}

fn writer(k: &mut Kernel, congestion: CongestionProfile, input: crate::signals::ChannelId, h: &mut SocHandles) -> Result<(), KernelError> {
    let ch = k.add_manager_port("output", SOC_BUS_BYTES, congestion)?;
    let id = k.register_process(Box::new(S2mmDma::new("output_dma", ch, SOC_BUS_BYTES, input)))?;
    k.map_registers(id, window("output_dma", OUTPUT_DMA, DMA_WINDOW, DMA_LATENCY))?;
    h.ports.push(("output".into(), ch));
    h.processes.push(("output_dma".into(), id));
    Ok(())
}

/// Four DMAs, the array with its controller and the partial-sum adder.
/// `rows` and `cols` bound the dimensions a job may request.
pub fn build_systolic_soc(
    k: &mut Kernel,
    rows: usize,
    cols: usize,
    congestion: CongestionProfile,
) -> Result<SocHandles, KernelError> {
    if !(1..=MAX_DIM).contains(&rows) || !(1..=MAX_DIM).contains(&cols) {
        return Err(KernelError::Config(format!("array dimensions {rows}x{cols} outside 1..={MAX_DIM}")));
    }
    let mut h = SocHandles { ports: Vec::new(), processes: Vec::new() };
    let [weights, input, psum] = readers(k, congestion, &mut h)?;
    let array_out = k.add_stream("array_out", SOC_BUS_BYTES)?;
    let result = k.add_stream("result_stream", SOC_BUS_BYTES)?;
    writer(k, congestion, result, &mut h)?;

    let core = SystolicCore::new("array", rows, cols, SOC_BUS_BYTES, weights, input, array_out);
    let id = k.register_process(Box::new(core))?;
    k.map_registers(id, window("controller", CONTROLLER, CONTROLLER_WINDOW, CONTROLLER_LATENCY))?;
    h.processes.push(("array".into(), id));
    let id = k.register_process(Box::new(PsumAdder::new("adder", array_out, psum, result)))?;
    h.processes.push(("adder".into(), id));
    Ok(h)
}

/// The four DMAs without the array: MM2S outputs drain into always-ready
/// sinks, and a pattern source feeds the S2MM. Used to load the
/// interconnect with long transfers on every port at once.
pub fn build_dma_bench(k: &mut Kernel, congestion: CongestionProfile) -> Result<SocHandles, KernelError> {
    let mut h = SocHandles { ports: Vec::new(), processes: Vec::new() };
    let streams = readers(k, congestion, &mut h)?;
    let src = k.add_stream("source_stream", SOC_BUS_BYTES)?;
    writer(k, congestion, src, &mut h)?;
    let id = k.register_process(Box::new(StreamSource::new("source", src, SOC_BUS_BYTES, None)))?;
    h.processes.push(("source".into(), id));
    let id = k.register_process(Box::new(SinkBank::new("sinks", streams.to_vec())))?;
    k.map_registers(id, window("sinks", SINK_COUNTERS, 0x10, SINK_LATENCY))?;
    h.processes.push(("sinks".into(), id));
    Ok(h)
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct RegisterField {
    pub offset: u64,
    pub name: &'static str,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct RegisterWindowInfo {
    pub name: String,
    pub base: u64,
    pub len: u64,
    pub latency: u32,
    pub fields: Vec<RegisterField>,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct DutInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub manager_ports: Vec<&'static str>,
    pub registers: Vec<RegisterWindowInfo>,
}

fn dma_fields() -> Vec<RegisterField> {
    vec![
        RegisterField { offset: dma::CTRL as u64, name: "CTRL" },
        RegisterField { offset: dma::STATUS as u64, name: "STATUS" },
        RegisterField { offset: dma::ADDR_LO as u64, name: "ADDR_LO" },
        RegisterField { offset: dma::ADDR_HI as u64, name: "ADDR_HI" },
        RegisterField { offset: dma::LEN_BYTES as u64, name: "LEN_BYTES" },
    ]
}

fn dma_windows() -> Vec<RegisterWindowInfo> {
    [("weights_dma", WEIGHTS_DMA), ("input_dma", INPUT_DMA), ("psum_dma", PSUM_DMA), ("output_dma", OUTPUT_DMA)]
        .into_iter()
        .map(|(n, base)| RegisterWindowInfo {
            name: n.into(),
            base,
            len: DMA_WINDOW,
            latency: DMA_LATENCY,
            fields: dma_fields(),
        })
        .collect()
}

/// Reference DUTs available to scenarios.
pub fn catalogue() -> Vec<DutInfo> {
    let mut soc = dma_windows();
    soc.push(RegisterWindowInfo {
        name: "controller".into(),
        base: CONTROLLER,
        len: CONTROLLER_WINDOW,
        latency: CONTROLLER_LATENCY,
        fields: vec![
            RegisterField { offset: systolic::GO as u64, name: "GO" },
            RegisterField { offset: systolic::DIMS_R_C as u64, name: "DIMS_R_C" },
            RegisterField { offset: systolic::DIMS_M as u64, name: "DIMS_M" },
            RegisterField { offset: systolic::CTRL_STATUS as u64, name: "STATUS" },
        ],
    });
    let mut bench = dma_windows();
    bench.push(RegisterWindowInfo {
        name: "sinks".into(),
        base: SINK_COUNTERS,
        len: 0x10,
        latency: SINK_LATENCY,
        fields: vec![
            RegisterField { offset: 0x0, name: "WEIGHTS_BYTES" },
            RegisterField { offset: 0x4, name: "INPUT_BYTES" },
            RegisterField { offset: 0x8, name: "PSUM_BYTES" },
        ],
    });
    vec![
        DutInfo {
            name: "register-file",
            description: "scratch registers, 1-cycle access",
            manager_ports: Vec::new(),
            registers: vec![RegisterWindowInfo {
                name: "regfile".into(),
                base: REGFILE_BASE,
                len: REGFILE_WINDOW,
                latency: REGFILE_LATENCY,
                fields: vec![RegisterField { offset: 0, name: "R0 (R[n] at 4*n)" }],
            }],
        },
        DutInfo {
            name: "systolic-soc",
            description: "weight-stationary int8 systolic array with four AXI4 DMAs and a partial-sum adder",
            manager_ports: vec!["weights", "input", "psum", "output"],
            registers: soc,
        },
        DutInfo {
            name: "dma-bench",
            description: "the four SoC DMAs driving stream sinks and fed by a pattern source",
            manager_ports: vec!["weights", "input", "psum", "output"],
            registers: bench,
        },
    ]
}
