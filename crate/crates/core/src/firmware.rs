// SPDX-License-Identifier: Apache-2.0

//! Firmware-facing API.
//!
//! Firmware is ordinary blocking code running on its own OS thread. Every
//! call that consumes simulated time hands control to the kernel and waits
//! for the reply, so exactly one side runs at any moment and runs are fully
//! deterministic. Direct DDR access goes straight to the shared image and
//! costs zero cycles.
//!
//! Method names mirror the C shim (`fb_read_32`, `fb_write_32`, ...).

use std::any::Any;
use std::cell::{Cell, RefCell};
use std::panic::{self, AssertUnwindSafe};
use std::rc::Rc;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use thiserror::Error;

use crate::memory::MemoryImage;

/// Value returned by reads of addresses no register port decodes.
pub const UNMAPPED_READ_VALUE: u32 = 0xDEAD_DEAD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RegFault {
    #[error("register address {0:#x} is not 4-byte aligned")]
    Misaligned(u64),
    #[error("no register port decodes address {0:#x}")]
    Unmapped(u64),
}

impl RegFault {
    /// Numeric code handed across the C boundary.
    pub fn code(self) -> i32 {
        match self {
            RegFault::Misaligned(_) => -1,
            RegFault::Unmapped(_) => -2,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FirmwareError {
    #[error("no firmware task is running on this thread")]
    NoContext,
}

pub type FirmwareEntry = Box<dyn FnOnce(&FirmwareContext) -> u32 + Send + 'static>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FwCall {
    Read(u64),
    Write(u64, u32),
    Wait(u64),
}

pub(crate) enum FwMsg {
    Call(FwCall),
    Exit(u32),
    Panicked(Box<dyn Any + Send>),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FwReply {
    pub cycle: u64,
    pub value: Result<u32, RegFault>,
}

/// Unwind payload used to tear down a firmware thread whose run ended.
struct Aborted;

/// Unwind payload carrying an early `fb_exit`.
struct ExitRequest(u32);

thread_local! {
    static CURRENT: RefCell<Option<Rc<FirmwareContext>>> = const { RefCell::new(None) };
}

/// Handle through which the firmware task talks to the simulation.
pub struct FirmwareContext {
    to_kernel: Sender<FwMsg>,
    from_kernel: Receiver<FwReply>,
    memory: Arc<Mutex<MemoryImage>>,
    cycle: Cell<u64>,
    seed: u64,
}

impl std::fmt::Debug for FirmwareContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FirmwareContext").field("cycle", &self.cycle.get()).finish()
    }
}

impl FirmwareContext {
    fn call(&self, c: FwCall) -> Result<u32, RegFault> {
        if self.to_kernel.send(FwMsg::Call(c)).is_err() {
            panic::resume_unwind(Box::new(Aborted));
        }
        match self.from_kernel.recv() {
            Ok(reply) => {
                self.cycle.set(reply.cycle);
                reply.value
            }
            Err(_) => panic::resume_unwind(Box::new(Aborted)),
        }
    }

    /// Blocking 32-bit register read. Unmapped addresses read as
    /// [`UNMAPPED_READ_VALUE`]; misaligned ones fault without consuming time.
    pub fn fb_read_32(&self, addr: u64) -> Result<u32, RegFault> {
        match self.call(FwCall::Read(addr)) {
            Err(RegFault::Unmapped(_)) => Ok(UNMAPPED_READ_VALUE),
            r => r,
        }
    }

    /// Blocking 32-bit register write.
    pub fn fb_write_32(&self, addr: u64, value: u32) -> Result<(), RegFault> {
        self.call(FwCall::Write(addr, value)).map(|_| ())
    }

    /// Direct DDR read; zero simulated cycles.
    pub fn fb_mem_read(&self, addr: u64, len: usize) -> Vec<u8> {
        self.memory.lock().expect("memory lock").read_bytes(addr, len)
    }

    /// Direct DDR write; zero simulated cycles.
    pub fn fb_mem_write(&self, addr: u64, data: &[u8]) {
        self.memory.lock().expect("memory lock").write_bytes(addr, data)
    }

    /// Suspends the firmware for exactly `n` cycles (`0` returns at once).
    pub fn fb_wait_cycles(&self, n: u64) {
        if n > 0 {
            let _ = self.call(FwCall::Wait(n));
        }
    }

    pub fn fb_cycle_count(&self) -> u64 {
        self.cycle.get()
    }

    /// Terminates the firmware task with `code`.
    pub fn fb_exit(&self, code: u32) -> ! {
        panic::resume_unwind(Box::new(ExitRequest(code)))
    }

    /// Top-level run seed, for workload generation.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Polls `addr` until `(value & mask) == expect`, returning the final value.
    pub fn poll_until(&self, addr: u64, mask: u32, expect: u32) -> Result<u32, RegFault> {
        loop {
            let v = self.fb_read_32(addr)?;
            if v & mask == expect {
                return Ok(v);
            }
        }
    }
}

/// Runs `f` against the firmware context of the calling thread. This is the
/// entry point an FFI layer uses; calls from any other thread are rejected.
pub fn with_current<R>(f: impl FnOnce(&FirmwareContext) -> R) -> Result<R, FirmwareError> {
    let ctx = CURRENT.with(|c| c.borrow().clone()).ok_or(FirmwareError::NoContext)?;
    Ok(f(&ctx))
}

/// Kernel-side end of a running firmware thread.
pub(crate) struct FirmwareTask {
    to_fw: Option<Sender<FwReply>>,
    from_fw: Receiver<FwMsg>,
    join: Option<JoinHandle<()>>,
}

impl FirmwareTask {
    pub(crate) fn spawn(entry: FirmwareEntry, memory: Arc<Mutex<MemoryImage>>, seed: u64) -> Self {
        let (to_kernel, from_fw) = mpsc::channel();
        let (to_fw, from_kernel) = mpsc::channel::<FwReply>();
        let join = thread::Builder::new()
            .name("firmware".into())
            .spawn(move || {
                // Wait for the kernel to start the firmware at cycle 0.
                let Ok(start) = from_kernel.recv() else { return };
                let ctx = Rc::new(FirmwareContext {
                    to_kernel: to_kernel.clone(),
                    from_kernel,
                    memory,
                    cycle: Cell::new(start.cycle),
                    seed,
                });
                CURRENT.with(|c| *c.borrow_mut() = Some(ctx.clone()));
                let result = panic::catch_unwind(AssertUnwindSafe(|| entry(&ctx)));
                CURRENT.with(|c| *c.borrow_mut() = None);
                let msg = match result {
                    Ok(code) => FwMsg::Exit(code),
                    Err(p) if p.is::<Aborted>() => return,
                    Err(p) => match p.downcast::<ExitRequest>() {
                        Ok(e) => FwMsg::Exit(e.0),
                        Err(p) => FwMsg::Panicked(p),
                    },
                };
                let _ = to_kernel.send(msg);
            })
            .expect("spawn firmware thread");
        Self { to_fw: Some(to_fw), from_fw, join: Some(join) }
    }

    /// Resumes the firmware with `reply` and blocks until it yields again.
    pub(crate) fn resume(&mut self, reply: FwReply) -> FwMsg {
        let tx = self.to_fw.as_ref().expect("firmware already finished");
        if tx.send(reply).is_err() {
            return self.collect_exit();
        }
        match self.from_fw.recv() {
            Ok(msg) => msg,
            Err(_) => self.collect_exit(),
        }
    }

    fn collect_exit(&mut self) -> FwMsg {
        match self.join.take().map(|j| j.join()) {
            Some(Err(p)) => FwMsg::Panicked(p),
            _ => FwMsg::Panicked(Box::new("firmware thread vanished")),
        }
    }
}

impl Drop for FirmwareTask {
    fn drop(&mut self) {
        // Closing the reply channel unwinds a firmware thread that is still
        // blocked in a call.
        self.to_fw.take();
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_context_outside_firmware() {
        assert_eq!(with_current(|c| c.fb_cycle_count()), Err(FirmwareError::NoContext));
    }

    #[test]
    fn fault_codes_are_distinct() {
        assert_ne!(RegFault::Misaligned(0).code(), RegFault::Unmapped(0).code());
    }
}
