// SPDX-License-Identifier: Apache-2.0

//! Reference DUTs: DMAs, stream endpoints, a register file and the systolic
//! array SoC built from them.

pub mod dma;
pub mod regfile;
pub mod soc;
pub mod stream;
pub mod systolic;

pub use dma::{Mm2sDma, S2mmDma};
pub use regfile::RegisterFile;
pub use soc::{build_dma_bench, build_register_file, build_systolic_soc, catalogue, DutInfo, SocHandles};
pub use stream::{SinkBank, StreamSource};
pub use systolic::{PsumAdder, SystolicCore};

/// STATUS bits shared by the DMAs and the array controller.
pub const STATUS_BUSY: u32 = 1 << 0;
pub const STATUS_DONE: u32 = 1 << 1;
pub const STATUS_ERR: u32 = 1 << 2;
