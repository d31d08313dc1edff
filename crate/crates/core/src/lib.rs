// SPDX-License-Identifier: Apache-2.0

//! Cycle-accurate co-simulation of hardware blocks and their firmware.
//!
//! A [`kernel::Kernel`] advances a set of [`kernel::HardwareProcess`]es over
//! valid/ready channels, serves their AXI manager ports from a shared DDR
//! image through [`bridge::MemoryBridge`], and runs firmware as ordinary
//! blocking code against [`firmware::FirmwareContext`].

pub mod axi;
pub mod bridge;
pub mod congestion;
pub mod dut;
pub mod firmware;
pub mod kernel;
pub mod memory;
pub mod profiler;
pub mod programs;
pub mod scenario;
pub mod signals;
pub mod waveform;

pub use bridge::{ArbitrationPolicy, MemoryBridge, Mutation, RegisterPort};
pub use congestion::{ChannelCongestion, CongestionProfile};
pub use firmware::{with_current, FirmwareContext, RegFault};
pub use kernel::{CycleIo, HardwareProcess, Kernel, KernelConfig, Outcome, SimResult, SimTime};
pub use memory::MemoryImage;
