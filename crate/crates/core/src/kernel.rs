// SPDX-License-Identifier: Apache-2.0

//! Cycle kernel.
//!
//! Each cycle `t` runs, in order:
//!
//! 1. the firmware phase: register accesses and waits whose completion
//!    cycle has arrived return, and the firmware runs until it blocks again;
//! 2. phase 1: the memory bridge and every DUT process read the committed
//!    channel values of `t` and drive values for `t + 1`;
//! 3. observation of the committed values of `t` (protocol checker,
//!    profiler, trace, waveform);
//! 4. commit, making the driven values visible at `t + 1`.
//!
//! Because phase 1 only reads committed values, process order inside a
//! cycle never affects the result.

use std::panic;
use std::sync::{Arc, Mutex, MutexGuard};

use thiserror::Error;

use crate::axi::{ProtocolChecker, ProtocolViolation};
use crate::bridge::{BridgeError, Decoded, ManagerPortIface, MemoryBridge, RegisterMap, RegisterPort, UNMAPPED_DECODE_LATENCY};
use crate::congestion::CongestionProfile;
use crate::firmware::{FirmwareContext, FirmwareEntry, FirmwareTask, FwCall, FwMsg, FwReply, RegFault, UNMAPPED_READ_VALUE};
use crate::memory::MemoryImage;
use crate::profiler::{BeatRecord, Profiler, ProfilerError, RegisterRecord, ReportBundle, ReportShape};
use crate::signals::{AxiChannels, Beat, ChannelClass, ChannelId, ChannelInfo, ChannelSample, ChannelTrace, Signals};
use crate::waveform::{VcdOptions, VcdTrace, WaveformError};

/// Simulated time in clock cycles.
pub type SimTime = u64;

pub const DEFAULT_WATCHDOG_WINDOW: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelConfig {
    pub max_cycles: u64,
    /// Idle cycles tolerated before a run is declared hung.
    pub watchdog_window: u64,
    pub seed: u64,
    /// Stop at the first protocol violation.
    pub strict: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { max_cycles: 1_000_000, watchdog_window: DEFAULT_WATCHDOG_WINDOW, seed: 0, strict: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    FirmwareDone { exit_code: u32 },
    MaxCyclesReached,
    Hang,
    ProtocolViolation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    pub outcome: Outcome,
    pub final_cycle: SimTime,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("the simulation has already started")]
    AlreadyStarted,
    #[error("a firmware task is already registered")]
    FirmwareExists,
    #[error("channel name '{0}' is already in use")]
    DuplicateChannel(String),
    #[error("unknown process handle {0}")]
    UnknownProcess(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Profiler(#[from] ProfilerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessId(pub usize);

/// Internal state a process exposes to the waveform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub name: String,
    pub width: u32,
}

impl Probe {
    pub fn new(name: impl Into<String>, width: u32) -> Self {
        Self { name: name.into(), width }
    }
}

/// A synchronous hardware block.
pub trait HardwareProcess {
    fn name(&self) -> &str;

    /// Reads committed values of the current cycle and drives next-cycle
    /// values through `io`.
    fn step(&mut self, io: &mut CycleIo<'_>);

    /// Register read at `offset` within one of the process's windows.
    /// `None` is a decode error.
    fn read_register(&mut self, _offset: u32) -> Option<u32> {
        None
    }

    /// Register write; `false` is a decode error.
    fn write_register(&mut self, _offset: u32, _value: u32) -> bool {
        false
    }

    /// Explanations of why the process is waiting, for hang reports.
    fn diagnose(&self) -> Vec<String> {
        Vec::new()
    }

    fn probes(&self) -> Vec<Probe> {
        Vec::new()
    }

    /// Current probe values, one per entry of [`HardwareProcess::probes`].
    fn sample_probes(&self, _out: &mut Vec<u64>) {}
}

/// Per-cycle view handed to the bridge and to processes.
pub struct CycleIo<'a> {
    cycle: SimTime,
    signals: &'a mut Signals,
    memory: &'a mut MemoryImage,
}

impl<'a> CycleIo<'a> {
    pub fn cycle(&self) -> SimTime {
        self.cycle
    }

    pub fn sample(&self, ch: ChannelId) -> &ChannelSample {
        self.signals.sample(ch)
    }

    pub fn valid(&self, ch: ChannelId) -> bool {
        self.signals.sample(ch).valid
    }

    pub fn ready(&self, ch: ChannelId) -> bool {
        self.signals.sample(ch).ready
    }

    pub fn fired(&self, ch: ChannelId) -> bool {
        self.signals.sample(ch).fired()
    }

    pub fn payload(&self, ch: ChannelId) -> Option<&Beat> {
        self.signals.sample(ch).payload.as_ref()
    }

    pub fn drive(&mut self, ch: ChannelId, beat: Option<Beat>) {
        self.signals.drive(ch, beat)
    }

    pub fn drive_ready(&mut self, ch: ChannelId, ready: bool) {
        self.signals.drive_ready(ch, ready)
    }

    pub(crate) fn memory(&mut self) -> &mut MemoryImage {
        self.memory
    }
}

#[derive(Debug, Clone, Copy)]
enum FwState {
    Absent,
    Ready(Result<u32, RegFault>),
    Sleeping(SimTime),
    Pending { due: SimTime, addr: u64, write: Option<u32>, target: Option<Decoded> },
    Done(u32),
}

struct Waveform {
    trace: VcdTrace,
    buf: Vec<Vec<u8>>,
    probes: Vec<u64>,
}

pub struct Kernel {
    signals: Signals,
    processes: Vec<Box<dyn HardwareProcess>>,
    bridge: MemoryBridge,
    registers: RegisterMap,
    memory: Arc<Mutex<MemoryImage>>,
    profiler: Profiler,
    entry: Option<FirmwareEntry>,
    firmware: Option<FirmwareTask>,
    fw_state: FwState,
    started: bool,
    record_trace: bool,
    trace: Option<ChannelTrace>,
    vcd_opts: Option<VcdOptions>,
    waveform: Option<Waveform>,
    checker: Option<ProtocolChecker>,
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel")
            .field("channels", &self.signals.len())
            .field("processes", &self.processes.len())
            .field("started", &self.started)
            .finish()
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Self::new()
    }
}

impl Kernel {
    pub fn new() -> Self {
        Self::with_memory(MemoryImage::new())
    }

    pub fn with_memory(memory: MemoryImage) -> Self {
        Self {
            signals: Signals::new(),
            processes: Vec::new(),
            bridge: MemoryBridge::new(),
            registers: RegisterMap::new(),
            memory: Arc::new(Mutex::new(memory)),
            profiler: Profiler::new(),
            entry: None,
            firmware: None,
            fw_state: FwState::Absent,
            started: false,
            record_trace: false,
            trace: None,
            vcd_opts: None,
            waveform: None,
            checker: None,
        }
    }

    fn ensure_setup(&self) -> Result<(), KernelError> {
        if self.started {
            Err(KernelError::AlreadyStarted)
        } else {
            Ok(())
        }
    }

    fn ensure_unique(&self, group: &str) -> Result<(), KernelError> {
        if self.signals.info().iter().any(|c| c.group == group) {
            return Err(KernelError::DuplicateChannel(group.to_string()));
        }
        Ok(())
    }

    /// Creates the five channels of a manager port and attaches them to the
    /// memory bridge.
    pub fn add_manager_port(
        &mut self,
        name: &str,
        bus_bytes: usize,
        congestion: CongestionProfile,
    ) -> Result<AxiChannels, KernelError> {
        self.ensure_setup()?;
        if self.bridge.ports().any(|p| p.name == name) {
            return Err(BridgeError::DuplicatePort(name.to_string()).into());
        }
        self.ensure_unique(name)?;
        // Validate before creating channels so a rejected port leaves no trace.
        if !bus_bytes.is_power_of_two() || bus_bytes > crate::axi::MAX_BUS_BYTES {
            return Err(BridgeError::BusWidth { name: name.to_string(), bytes: bus_bytes }.into());
        }
        congestion
            .validate()
            .map_err(|source| BridgeError::Congestion { port: name.to_string(), source })?;
        let channels = self.signals.axi_port(name, bus_bytes);
        self.bridge.attach(ManagerPortIface { name: name.to_string(), bus_bytes, channels }, congestion)?;
        self.profiler.add_port(name, bus_bytes as u32);
        Ok(channels)
    }

    /// Creates a point-to-point stream channel between two processes.
    pub fn add_stream(&mut self, name: &str, width_bytes: usize) -> Result<ChannelId, KernelError> {
        self.ensure_setup()?;
        self.ensure_unique(name)?;
        Ok(self.signals.stream(name, width_bytes))
    }

    pub fn register_process(&mut self, process: Box<dyn HardwareProcess>) -> Result<ProcessId, KernelError> {
        self.ensure_setup()?;
        self.processes.push(process);
        Ok(ProcessId(self.processes.len() - 1))
    }

    pub fn map_registers(&mut self, owner: ProcessId, port: RegisterPort) -> Result<(), KernelError> {
        self.ensure_setup()?;
        if owner.0 >= self.processes.len() {
            return Err(KernelError::UnknownProcess(owner.0));
        }
        self.registers.add(port, owner.0)?;
        Ok(())
    }

    pub fn spawn_firmware<F>(&mut self, entry: F) -> Result<(), KernelError>
    where
        F: FnOnce(&FirmwareContext) -> u32 + Send + 'static,
    {
        self.ensure_setup()?;
        if self.entry.is_some() {
            return Err(KernelError::FirmwareExists);
        }
        self.entry = Some(Box::new(entry));
        Ok(())
    }

    pub fn bridge_mut(&mut self) -> &mut MemoryBridge {
        &mut self.bridge
    }

    pub fn bridge(&self) -> &MemoryBridge {
        &self.bridge
    }

    /// Records every committed channel sample for offline checking.
    pub fn enable_trace(&mut self) {
        self.record_trace = true;
    }

    pub fn enable_vcd(&mut self, opts: VcdOptions) {
        self.vcd_opts = Some(opts);
    }

    pub fn memory(&self) -> MutexGuard<'_, MemoryImage> {
        self.memory.lock().expect("memory lock")
    }

    pub fn shared_memory(&self) -> Arc<Mutex<MemoryImage>> {
        Arc::clone(&self.memory)
    }

    pub fn channels(&self) -> &[ChannelInfo] {
        self.signals.info()
    }

    pub fn registers(&self) -> &RegisterMap {
        &self.registers
    }

    pub fn process(&self, id: ProcessId) -> Option<&dyn HardwareProcess> {
        self.processes.get(id.0).map(|p| p.as_ref())
    }

    pub fn profiler(&self) -> &Profiler {
        &self.profiler
    }

    pub fn trace(&self) -> Option<&ChannelTrace> {
        self.trace.as_ref()
    }

    pub fn violations(&self) -> &[ProtocolViolation] {
        self.checker.as_ref().map_or(&[], |c| c.violations())
    }

    pub fn take_vcd(&mut self) -> Option<VcdTrace> {
        self.waveform.take().map(|w| w.trace)
    }

    /// Report over the finished run; watch events are drained from memory.
    pub fn report(&mut self, shape: ReportShape) -> Result<ReportBundle, KernelError> {
        let events = self.memory().take_access_log();
        Ok(self.profiler.bundle(shape, events)?)
    }

    fn setup_waveform(&mut self) -> Result<(), KernelError> {
        let Some(opts) = self.vcd_opts.take() else { return Ok(()) };
        let mut trace = VcdTrace::new(opts);
        for info in self.signals.info() {
            let scope = [info.group.as_str()];
            for (name, width) in channel_fields(info) {
                trace.declare(&scope, &name, width)?;
            }
        }
        for p in &self.processes {
            let name = p.name().to_string();
            for probe in p.probes() {
                trace.declare(&["dut", &name], &probe.name, probe.width)?;
            }
        }
        let n = trace.signals().len();
        self.waveform = Some(Waveform { trace, buf: vec![Vec::new(); n], probes: Vec::new() });
        Ok(())
    }

    fn sample_waveform(&mut self, t: SimTime) -> Result<(), KernelError> {
        let Some(w) = self.waveform.as_mut() else { return Ok(()) };
        let mut k = 0;
        for (info, s) in self.signals.info().iter().zip(self.signals.current()) {
            for v in channel_values(info, s) {
                w.buf[k] = v;
                k += 1;
            }
        }
        for p in &self.processes {
            let widths: Vec<u32> = p.probes().iter().map(|q| q.width).collect();
            w.probes.clear();
            p.sample_probes(&mut w.probes);
            for (i, width) in widths.iter().enumerate() {
                let v = w.probes.get(i).copied().unwrap_or(0) & width_mask(*width);
                w.buf[k] = v.to_le_bytes()[..(*width as usize).div_ceil(8).min(8)].to_vec();
                k += 1;
            }
        }
        let refs: Vec<&[u8]> = w.buf.iter().map(|v| v.as_slice()).collect();
        w.trace.sample_cycle(t, &refs)?;
        Ok(())
    }

    fn begin_register(&self, t: SimTime, addr: u64, write: Option<u32>) -> FwState {
        match self.registers.decode(addr) {
            Ok(d) => FwState::Pending { due: t + d.latency as u64, addr, write, target: Some(d) },
            Err(RegFault::Unmapped(_)) => {
                FwState::Pending { due: t + UNMAPPED_DECODE_LATENCY as u64, addr, write, target: None }
            }
            Err(e) => FwState::Ready(Err(e)),
        }
    }

    /// Applies a due register access; returns the reply value and whether a
    /// write landed.
    fn complete_register(&mut self, t: SimTime, addr: u64, write: Option<u32>, target: Option<Decoded>) -> (Result<u32, RegFault>, bool) {
        let (value, ok) = match (target, write) {
            (Some(d), None) => match self.processes[d.owner].read_register(d.offset) {
                Some(v) => (v, true),
                None => (UNMAPPED_READ_VALUE, false),
            },
            (Some(d), Some(v)) => (v, self.processes[d.owner].write_register(d.offset, v)),
            (None, w) => (w.unwrap_or(UNMAPPED_READ_VALUE), false),
        };
        self.profiler.observe_register(RegisterRecord {
            cycle: t,
            addr,
            write: write.is_some(),
            value,
            decode_error: !ok,
        });
        let reply = if ok { Ok(value) } else { Err(RegFault::Unmapped(addr)) };
        (reply, ok && write.is_some())
    }

    /// Runs the firmware until it blocks on something not yet due. Returns
    /// whether it made progress (a register write or its exit).
    fn firmware_phase(&mut self, t: SimTime) -> bool {
        let mut progress = false;
        loop {
            let value = match self.fw_state {
                FwState::Ready(v) => v,
                FwState::Sleeping(until) if until <= t => Ok(0),
                FwState::Pending { due, addr, write, target } if due <= t => {
                    let (v, wrote) = self.complete_register(t, addr, write, target);
                    progress |= wrote;
                    v
                }
                _ => break,
            };
            let task = self.firmware.as_mut().expect("firmware task");
            match task.resume(FwReply { cycle: t, value }) {
                FwMsg::Call(FwCall::Wait(n)) => self.fw_state = FwState::Sleeping(t + n),
                FwMsg::Call(FwCall::Read(a)) => self.fw_state = self.begin_register(t, a, None),
                FwMsg::Call(FwCall::Write(a, v)) => self.fw_state = self.begin_register(t, a, Some(v)),
                FwMsg::Exit(code) => {
                    self.fw_state = FwState::Done(code);
                    self.firmware = None;
                    progress = true;
                    break;
                }
                FwMsg::Panicked(p) => {
                    self.firmware = None;
                    panic::resume_unwind(p);
                }
            }
        }
        progress
    }

    fn hang_diagnostics(&self, idle: u64) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        if let Some(c) = &self.checker {
            out.extend(c.outstanding().iter().map(|s| s.to_string()));
        }
        for (info, s) in self.signals.info().iter().zip(self.signals.current()) {
            if info.class == ChannelClass::Stream && s.valid && !s.ready {
                out.push(format!("stream '{}' stuck: TVALID asserted, TREADY withheld downstream", info.group));
            }
        }
        for p in &self.processes {
            out.extend(p.diagnose().into_iter().map(|d| format!("{}: {}", p.name(), d)));
        }
        let fw = match self.fw_state {
            FwState::Sleeping(until) => format!("firmware sleeping until cycle {until}"),
            FwState::Pending { addr, write: None, .. } => format!("firmware polling register {addr:#x}"),
            FwState::Pending { addr, write: Some(_), .. } => format!("firmware writing register {addr:#x}"),
            _ => "firmware blocked".to_string(),
        };
        out.push(format!("no handshake or firmware write for {idle} cycles; {fw}"));
        out
    }

    /// Runs the simulation to completion. A kernel runs once.
    pub fn run(&mut self, config: &KernelConfig) -> Result<SimResult, KernelError> {
        self.ensure_setup()?;
        if config.watchdog_window == 0 {
            return Err(KernelError::Config("watchdog window must be at least 1 cycle".into()));
        }
        self.bridge.prepare()?;
        self.started = true;
        self.setup_waveform()?;
        self.checker = Some(ProtocolChecker::new(self.signals.info()));
        if self.record_trace {
            self.trace = Some(ChannelTrace { channels: self.signals.info().to_vec(), cycles: Vec::new() });
        }
        if let Some(entry) = self.entry.take() {
            self.firmware = Some(FirmwareTask::spawn(entry, Arc::clone(&self.memory), config.seed));
            self.fw_state = FwState::Ready(Ok(0));
        }

        let result = self.cycle_loop(config);
        // Unwinds a firmware thread still blocked in a call.
        self.firmware = None;
        if let Ok(r) = &result {
            self.profiler.finish(r.final_cycle);
        }
        result
    }

    fn cycle_loop(&mut self, config: &KernelConfig) -> Result<SimResult, KernelError> {
        let mut records: Vec<BeatRecord> = Vec::new();
        let mut idle: u64 = 0;
        let mut t: SimTime = 0;
        loop {
            self.memory().set_time(t);
            let progress = if matches!(self.fw_state, FwState::Absent) { false } else { self.firmware_phase(t) };
            if let FwState::Done(exit_code) = self.fw_state {
                return Ok(SimResult { outcome: Outcome::FirmwareDone { exit_code }, final_cycle: t, diagnostics: Vec::new() });
            }
            if t >= config.max_cycles {
                return Ok(SimResult { outcome: Outcome::MaxCyclesReached, final_cycle: t, diagnostics: Vec::new() });
            }

            {
                let mut mem = self.memory.lock().expect("memory lock");
                let mut io = CycleIo { cycle: t, signals: &mut self.signals, memory: &mut mem };
                self.bridge.service(&mut io);
                for p in &mut self.processes {
                    p.step(&mut io);
                }
            }

            let samples = self.signals.current();
            let fresh = self.checker.as_mut().expect("checker").observe_cycle(t, samples);
            records.clear();
            self.bridge.observe(t, samples, &mut records);
            for r in records.drain(..) {
                self.profiler.observe(r)?;
            }
            let any_fired = samples.iter().any(ChannelSample::fired);
            if let Some(tr) = self.trace.as_mut() {
                tr.cycles.push(samples.to_vec());
            }
            self.sample_waveform(t)?;

            if config.strict && fresh > 0 {
                let v = self.violations();
                let diagnostics = v[v.len() - fresh..].iter().map(|v| v.to_string()).collect();
                return Ok(SimResult { outcome: Outcome::ProtocolViolation, final_cycle: t + 1, diagnostics });
            }

            self.signals.commit();

            if any_fired || progress {
                idle = 0;
            } else {
                idle += 1;
            }
            if self.firmware.is_some() && idle >= config.watchdog_window {
                return Ok(SimResult { outcome: Outcome::Hang, final_cycle: t + 1, diagnostics: self.hang_diagnostics(idle) });
            }
            t += 1;
        }
    }
}

fn width_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Waveform fields of a channel: valid, ready, then payload fields.
fn channel_fields(info: &ChannelInfo) -> Vec<(String, u32)> {
    let bus = (info.width_bytes * 8) as u32;
    let p = match info.class {
        ChannelClass::Ar => "ar",
        ChannelClass::R => "r",
        ChannelClass::Aw => "aw",
        ChannelClass::W => "w",
        ChannelClass::B => "b",
        ChannelClass::Stream => "t",
    };
    let mut f = vec![(format!("{p}valid"), 1), (format!("{p}ready"), 1)];
    match info.class {
        ChannelClass::Ar | ChannelClass::Aw => {
            f.push((format!("{p}addr"), 64));
            f.push((format!("{p}len"), 8));
            f.push((format!("{p}size"), 3));
            f.push((format!("{p}id"), 8));
        }
        ChannelClass::R => {
            f.push(("rdata".into(), bus));
            f.push(("rlast".into(), 1));
            f.push(("rid".into(), 8));
        }
        ChannelClass::W => {
            f.push(("wdata".into(), bus));
            f.push(("wstrb".into(), info.width_bytes as u32));
            f.push(("wlast".into(), 1));
        }
        ChannelClass::B => {
            f.push(("bresp".into(), 2));
            f.push(("bid".into(), 8));
        }
        ChannelClass::Stream => {
            f.push(("tdata".into(), bus));
            f.push(("tlast".into(), 1));
        }
    }
    f
}

fn channel_values(info: &ChannelInfo, s: &ChannelSample) -> Vec<Vec<u8>> {
    let bit = |b: bool| vec![b as u8];
    let mut v = vec![bit(s.valid), bit(s.ready)];
    let strb_bytes = info.width_bytes.div_ceil(8);
    match (info.class, s.payload.as_ref()) {
        (ChannelClass::Ar | ChannelClass::Aw, Some(Beat::Addr(a))) => {
            v.push(a.addr.to_le_bytes().to_vec());
            v.push(vec![a.len_m1]);
            v.push(vec![a.size_log2 & 7]);
            v.push(vec![a.id]);
        }
        (ChannelClass::R, Some(Beat::Data(d))) => {
            v.push(d.data.clone());
            v.push(bit(d.last));
            v.push(vec![d.id]);
        }
        (ChannelClass::W, Some(Beat::Data(d))) => {
            v.push(d.data.clone());
            v.push((d.strb & crate::axi::lane_mask(info.width_bytes)).to_le_bytes()[..strb_bytes].to_vec());
            v.push(bit(d.last));
        }
        (ChannelClass::B, Some(Beat::Resp(r))) => {
            v.push(vec![r.resp as u8]);
            v.push(vec![r.id]);
        }
        (ChannelClass::Stream, Some(Beat::Stream(b))) => {
            v.push(b.data.clone());
            v.push(bit(b.last));
        }
        _ => {
            let n = channel_fields(info).len() - 2;
            v.extend(std::iter::repeat_n(Vec::new(), n));
        }
    }
    v
}
