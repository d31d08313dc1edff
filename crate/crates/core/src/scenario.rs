// SPDX-License-Identifier: Apache-2.0

//! Scenario files: a TOML description of DUT, firmware, congestion,
//! arbitration and outputs, and the runner that turns one into a result.
//!
//! ```toml
//! seed = 7
//! max_cycles = 200000
//!
//! [dut]
//! kind = "systolic-soc"
//! rows = 8
//! cols = 8
//!
//! [firmware]
//! builtin = "matmul"
//! params = { m = 8 }
//!
//! [congestion]
//! ready_stall_prob = 0.2
//! valid_delay_max = 3
//!
//! [arbitration]
//! policy = "fixed-priority"
//! order = ["input", "weights", "psum", "output"]
//!
//! [report]
//! dir = "out"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axi::ProtocolViolation;
use crate::bridge::{ArbitrationPolicy, Mutation};
use crate::congestion::{ChannelCongestion, CongestionProfile};
use crate::dut::{self, systolic::MAX_DIM};
use crate::kernel::{Kernel, KernelConfig, KernelError, Outcome, SimResult, DEFAULT_WATCHDOG_WINDOW};
use crate::memory::{MemoryError, MemoryImage, WatchRegion};
use crate::profiler::{ExportFormat, ProfilerError, ReportBundle, ReportShape};
use crate::programs::{self, Builtin, FirmwareParams};
use crate::signals::ChannelTrace;
use crate::waveform::{VcdOptions, WaveformError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Report(#[from] ProfilerError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

impl ScenarioError {
    /// True for problems with the scenario itself rather than the run.
    pub fn is_config(&self) -> bool {
        match self {
            ScenarioError::Parse(_) | ScenarioError::Invalid(_) | ScenarioError::Memory(_) => true,
            ScenarioError::Io { .. } => true,
            ScenarioError::Kernel(k) => matches!(k, KernelError::Config(_) | KernelError::Bridge(_)),
            _ => false,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DutConfig {
    RegisterFile {
        #[serde(default = "default_regs")]
        n_regs: usize,
    },
    SystolicSoc {
        rows: usize,
        cols: usize,
    },
    DmaBench,
}

fn default_regs() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmwareConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<Builtin>,
    /// Firmware built from C through the shim; not runnable in this build.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_shim: Option<PathBuf>,
    #[serde(default)]
    pub params: FirmwareParams,
}

/// Global congestion settings with optional per-channel-class overrides.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CongestionConfig {
    pub ready_stall_prob: f64,
    pub valid_delay_min: u32,
    pub valid_delay_max: u32,
    /// Seed of the congestion streams; the top-level seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ar: Option<ChannelCongestion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<ChannelCongestion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aw: Option<ChannelCongestion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<ChannelCongestion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<ChannelCongestion>,
}

impl CongestionConfig {
    pub fn uniform(ready_stall_prob: f64, valid_delay_min: u32, valid_delay_max: u32) -> Self {
        Self { ready_stall_prob, valid_delay_min, valid_delay_max, ..Default::default() }
    }

    pub fn profile(&self, seed: u64) -> CongestionProfile {
        let g = ChannelCongestion::new(self.ready_stall_prob, self.valid_delay_min, self.valid_delay_max);
        CongestionProfile {
            ar: self.ar.unwrap_or(g),
            r: self.r.unwrap_or(g),
            aw: self.aw.unwrap_or(g),
            w: self.w.unwrap_or(g),
            b: self.b.unwrap_or(g),
            seed: self.seed.unwrap_or(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    #[default]
    RoundRobin,
    FixedPriority,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArbitrationConfig {
    pub policy: PolicyKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub order: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub format: ReportFormat,
    pub window_cycles: u64,
    pub addr_bucket_bytes: u64,
    pub time_bucket_cycles: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        let s = ReportShape::default();
        Self {
            dir: None,
            format: ReportFormat::Csv,
            window_cycles: s.window_cycles,
            addr_bucket_bytes: s.addr_bucket_bytes,
            time_bucket_cycles: s.time_bucket_cycles,
        }
    }
}

impl ReportConfig {
    pub fn shape(&self) -> ReportShape {
        ReportShape {
            window_cycles: self.window_cycles,
            addr_bucket_bytes: self.addr_bucket_bytes,
            time_bucket_cycles: self.time_bucket_cycles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preload {
    pub path: PathBuf,
    pub base: u64,
}

fn default_max_cycles() -> u64 {
    1_000_000
}

fn default_watchdog() -> u64 {
    DEFAULT_WATCHDOG_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: u64,
    #[serde(default = "default_watchdog")]
    pub watchdog_window: u64,
    #[serde(default)]
    pub strict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vcd: Option<PathBuf>,
    pub dut: DutConfig,
    pub firmware: FirmwareConfig,
    #[serde(default)]
    pub congestion: CongestionConfig,
    #[serde(default)]
    pub arbitration: ArbitrationConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub watch: Vec<WatchRegion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preload: Vec<Preload>,
}

impl ScenarioConfig {
    /// A scenario with default settings around `dut` and a builtin program.
    pub fn new(dut: DutConfig, builtin: Builtin) -> Self {
        Self {
            seed: 0,
            max_cycles: default_max_cycles(),
            watchdog_window: default_watchdog(),
            strict: false,
            vcd: None,
            dut,
            firmware: FirmwareConfig { builtin: Some(builtin), c_shim: None, params: FirmwareParams::default() },
            congestion: CongestionConfig::default(),
            arbitration: ArbitrationConfig::default(),
            report: ReportConfig::default(),
            watch: Vec::new(),
            preload: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    /// Fails for integers TOML cannot hold (above `i64::MAX`).
    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    /// Reads and validates a scenario file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for pre in &mut cfg.preload {
            rebase(&mut pre.path);
        }
        if let Some(p) = cfg.firmware.c_shim.as_mut() {
            rebase(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Matmul dimensions (m, r, c) for the SoC programs.
    pub fn matmul_dims(&self) -> Option<(usize, usize, usize)> {
        let DutConfig::SystolicSoc { rows, cols } = self.dut else { return None };
        let p = &self.firmware.params;
        let r = p.r.map_or(rows, |v| v as usize);
        let c = p.c.map_or(cols, |v| v as usize);
        Some((p.m as usize, r, c))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.max_cycles == 0 {
            return Err(invalid("max_cycles must be at least 1"));
        }
        if self.watchdog_window == 0 {
            return Err(invalid("watchdog_window must be at least 1"));
        }
        match self.dut {
            DutConfig::RegisterFile { n_regs } if !(1..=dut::regfile::MAX_REGS).contains(&n_regs) => {
                return Err(invalid(format!("n_regs {n_regs} outside 1..={}", dut::regfile::MAX_REGS)));
            }
            DutConfig::SystolicSoc { rows, cols } if !(1..=MAX_DIM).contains(&rows) || !(1..=MAX_DIM).contains(&cols) => {
                return Err(invalid(format!("array {rows}x{cols} outside 1..={MAX_DIM}")));
            }
            _ => {}
        }
        let builtin = match (&self.firmware.builtin, &self.firmware.c_shim) {
            (Some(b), None) => *b,
            (None, Some(p)) => {
                return Err(invalid(format!(
                    "firmware '{}' needs the C shim, which is not part of this build",
                    p.display()
                )))
            }
            _ => return Err(invalid("firmware must name exactly one of `builtin` or `c_shim`")),
        };
        let needs = match builtin {
            Builtin::Matmul | Builtin::HangReproducer | Builtin::PingPong => "systolic-soc",
            Builtin::RegfileSmoke => "register-file",
            Builtin::DmaStress => "dma-bench",
        };
        let has = match self.dut {
            DutConfig::RegisterFile { .. } => "register-file",
            DutConfig::SystolicSoc { .. } => "systolic-soc",
            DutConfig::DmaBench => "dma-bench",
        };
        if needs != has {
            return Err(invalid(format!("firmware '{}' needs dut kind '{needs}', got '{has}'", builtin.name())));
        }
        let p = &self.firmware.params;
        if let (Some((m, r, c)), DutConfig::SystolicSoc { rows, cols }) = (self.matmul_dims(), &self.dut) {
            if m == 0 || m > u16::MAX as usize {
                return Err(invalid(format!("m = {m} outside 1..={}", u16::MAX)));
            }
            if r == 0 || c == 0 || r > *rows || c > *cols {
                return Err(invalid(format!("matmul {r}x{c} does not fit the {rows}x{cols} array")));
            }
            if builtin == Builtin::PingPong && r != c {
                return Err(invalid("ping-pong layers must be square (r == c)"));
            }
        }
        if builtin == Builtin::HangReproducer && p.deficit_beats == 0 {
            return Err(invalid("deficit_beats must be at least 1"));
        }
        if builtin == Builtin::PingPong && (p.layers == 0 || p.layer_period_cycles == 0) {
            return Err(invalid("ping-pong needs at least one layer and a non-zero period"));
        }
        if builtin == Builtin::DmaStress
            && (p.transfer_bytes == 0 || !(p.transfer_bytes as usize).is_multiple_of(dut::soc::SOC_BUS_BYTES))
        {
            return Err(invalid("transfer_bytes must be a non-zero multiple of 16"));
        }
        self.congestion
            .profile(self.seed)
            .validate()
            .map_err(|e| invalid(format!("congestion: {e}")))?;
        if self.arbitration.policy == PolicyKind::FixedPriority && self.arbitration.order.is_empty() {
            return Err(invalid("fixed-priority arbitration needs an `order` list"));
        }
        let r = &self.report;
        if r.window_cycles == 0 || r.addr_bucket_bytes == 0 || r.time_bucket_cycles == 0 {
            return Err(invalid("report window and bucket sizes must be at least 1"));
        }
        for w in &self.watch {
            if w.length == 0 {
                return Err(invalid(format!("watch region '{}' is empty", w.label)));
            }
        }
        for pre in &self.preload {
            if !pre.path.is_file() {
                return Err(invalid(format!("preload image {} not found", pre.path.display())));
            }
        }
        Ok(())
    }
}

/// Run-time knobs not carried by the scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `vcd` from the scenario.
    pub vcd: Option<PathBuf>,
    /// Overrides `report.dir` from the scenario.
    pub report_dir: Option<PathBuf>,
    /// Keep the per-cycle channel trace in the result.
    pub record_trace: bool,
    /// Inject a bridge fault on the named port.
    pub mutation: Option<(String, Mutation)>,
}

/// Everything a finished scenario produced.
#[derive(Debug)]
pub struct ScenarioRun {
    pub result: SimResult,
    pub report: ReportBundle,
    pub violations: Vec<ProtocolViolation>,
    pub trace: Option<ChannelTrace>,
    pub memory: MemoryImage,
    /// Bytes still inside the bridge at the end: fetched but undelivered
    /// reads, and staged but uncommitted writes.
    pub inflight: (u64, u64),
    /// Per-port payload bytes recorded by the profiler.
    pub record_bytes: u64,
    pub files: Vec<PathBuf>,
}

impl ScenarioRun {
    /// Process exit status for this run.
    pub fn exit_code(&self) -> i32 {
        match self.result.outcome {
            Outcome::ProtocolViolation => 3,
            _ if !self.violations.is_empty() => 3,
            Outcome::FirmwareDone { exit_code: 0 } => 0,
            Outcome::FirmwareDone { .. } => 1,
            Outcome::Hang => 2,
            Outcome::MaxCyclesReached => 5,
        }
    }

    /// Payload bytes that crossed the bridge/memory boundary, corrected for
    /// what was still inside the bridge.
    pub fn memory_side_bytes(&self) -> u64 {
        let t = self.memory.bus_traffic();
        (t.bytes_read - self.inflight.0) + (t.bytes_written + self.inflight.1)
    }
}

/// Builds the DUT a scenario describes into `k`.
pub fn build_dut(k: &mut Kernel, dut: &DutConfig, profile: CongestionProfile) -> Result<dut::SocHandles, KernelError> {
    match *dut {
        DutConfig::RegisterFile { n_regs } => dut::build_register_file(k, n_regs),
        DutConfig::SystolicSoc { rows, cols } => dut::build_systolic_soc(k, rows, cols, profile),
        DutConfig::DmaBench => dut::build_dma_bench(k, profile),
    }
}

fn spawn_builtin(k: &mut Kernel, cfg: &ScenarioConfig) -> Result<(), KernelError> {
    let builtin = cfg.firmware.builtin.expect("validated");
    let p = cfg.firmware.params.clone();
    let dims = cfg.matmul_dims();
    let n_regs = match cfg.dut {
        DutConfig::RegisterFile { n_regs } => n_regs,
        _ => 0,
    };
    match builtin {
        Builtin::Matmul => {
            let (m, r, c) = dims.expect("soc");
            k.spawn_firmware(move |ctx| programs::matmul(ctx, m, r, c))
        }
        Builtin::HangReproducer => {
            let (m, r, c) = dims.expect("soc");
            k.spawn_firmware(move |ctx| programs::hang_reproducer(ctx, m, r, c, p.deficit_beats))
        }
        Builtin::PingPong => {
            let (m, r, _) = dims.expect("soc");
            k.spawn_firmware(move |ctx| programs::ping_pong(ctx, m, r, p.layers, p.layer_period_cycles))
        }
        Builtin::RegfileSmoke => k.spawn_firmware(move |ctx| programs::regfile_smoke(ctx, n_regs)),
        Builtin::DmaStress => k.spawn_firmware(move |ctx| programs::dma_stress(ctx, p.transfer_bytes)),
    }
}

/// Assembles and runs a validated scenario, writing any configured outputs.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioRun, ScenarioError> {
    cfg.validate()?;
    let mut k = Kernel::new();
    {
        let mut mem = k.memory();
        for pre in &cfg.preload {
            mem.load_image(&pre.path, pre.base)?;
        }
        for w in &cfg.watch {
            mem.add_watch(w.clone())?;
        }
    }
    build_dut(&mut k, &cfg.dut, cfg.congestion.profile(cfg.seed))?;
    if cfg.arbitration.policy == PolicyKind::FixedPriority {
        k.bridge_mut().set_policy(ArbitrationPolicy::FixedPriority(cfg.arbitration.order.clone()));
    }
    if let Some((port, m)) = &opts.mutation {
        k.bridge_mut().inject(port, *m).map_err(KernelError::from)?;
    }
    if opts.record_trace {
        k.enable_trace();
    }
    let vcd_path = opts.vcd.clone().or_else(|| cfg.vcd.clone());
    if vcd_path.is_some() {
        k.enable_vcd(VcdOptions::default());
    }
    spawn_builtin(&mut k, cfg)?;

    let result = k.run(&KernelConfig {
        max_cycles: cfg.max_cycles,
        watchdog_window: cfg.watchdog_window,
        seed: cfg.seed,
        strict: cfg.strict,
    })?;

    let report = k.report(cfg.report.shape())?;
    let mut files = Vec::new();
    if let Some(dir) = opts.report_dir.clone().or_else(|| cfg.report.dir.clone()) {
        if matches!(cfg.report.format, ReportFormat::Csv | ReportFormat::Both) {
            files.extend(report.export(ExportFormat::Csv, &dir)?);
        }
        if matches!(cfg.report.format, ReportFormat::Json | ReportFormat::Both) {
            files.extend(report.export(ExportFormat::Json, &dir)?);
        }
    }
    if let (Some(path), Some(vcd)) = (vcd_path, k.take_vcd()) {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|source| ScenarioError::Io { path: parent.to_path_buf(), source })?;
        }
        vcd.finalize(&path)?;
        files.push(path);
    }

    let record_bytes = k.profiler().records().map(|r| r.bytes as u64).sum();
    let violations = k.violations().to_vec();
    let trace = k.trace().cloned();
    let inflight = k.bridge().inflight_bytes();
    let memory = std::mem::take(&mut *k.memory());
    Ok(ScenarioRun { result, report, violations, trace, memory, inflight, record_bytes, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = r#"
seed = 7
max_cycles = 200000

[dut]
kind = "systolic-soc"
rows = 8
cols = 8

[firmware]
builtin = "matmul"
params = { m = 8 }

[congestion]
ready_stall_prob = 0.2
valid_delay_max = 3

[arbitration]
policy = "fixed-priority"
order = ["input", "weights", "psum", "output"]
"#;

    #[test]
    fn parse_sample() {
        let c = ScenarioConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.dut, DutConfig::SystolicSoc { rows: 8, cols: 8 });
        assert_eq!(c.firmware.builtin, Some(Builtin::Matmul));
        assert_eq!(c.congestion.valid_delay_max, 3);
        assert_eq!(c.watchdog_window, DEFAULT_WATCHDOG_WINDOW);
        c.validate().unwrap();
        let again = ScenarioConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(matches!(ScenarioConfig::from_toml("seed = "), Err(ScenarioError::Parse(_))));
        assert!(ScenarioConfig::from_toml("bogus = 1\n[dut]\nkind='dma-bench'\n[firmware]\nbuiltin='dma-stress'").is_err());
        let mut c = ScenarioConfig::from_toml(SAMPLE).unwrap();
        c.dut = DutConfig::SystolicSoc { rows: 17, cols: 8 };
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::from_toml(SAMPLE).unwrap();
        c.firmware.builtin = Some(Builtin::RegfileSmoke);
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::from_toml(SAMPLE).unwrap();
        c.firmware = FirmwareConfig { builtin: None, c_shim: Some("drv.so".into()), params: Default::default() };
        let e = c.validate().unwrap_err();
        assert!(e.is_config());
        let mut c = ScenarioConfig::from_toml(SAMPLE).unwrap();
        c.congestion.ready_stall_prob = 2.0;
        assert!(c.validate().is_err());
    }

    fn arb_dut() -> impl Strategy<Value = DutConfig> {
        prop_oneof![
            (1usize..=64).prop_map(|n_regs| DutConfig::RegisterFile { n_regs }),
            (1usize..=16, 1usize..=16).prop_map(|(rows, cols)| DutConfig::SystolicSoc { rows, cols }),
            Just(DutConfig::DmaBench),
        ]
    }

    fn arb_channel() -> impl Strategy<Value = Option<ChannelCongestion>> {
        proptest::option::of((0.0f64..=1.0, 0u32..8, 0u32..8).prop_map(|(p, a, b)| ChannelCongestion::new(p, a, a + b)))
    }

    proptest! {
        #[test]
        fn config_round_trip(
            seed in 0u64..=i64::MAX as u64,
            max_cycles in 1u64..10_000_000,
            strict in any::<bool>(),
            dut in arb_dut(),
            builtin in proptest::sample::select(Builtin::ALL.to_vec()),
            m in 1u32..64,
            prob in 0.0f64..=1.0,
            lo in 0u32..8,
            cseed in proptest::option::of(0u64..=i64::MAX as u64),
            ar in arb_channel(),
            w in arb_channel(),
            fixed in any::<bool>(),
            window in 1u64..4096,
            format in proptest::sample::select(vec![ReportFormat::Csv, ReportFormat::Json, ReportFormat::Both]),
            watch in proptest::collection::vec((0u64..1 << 40, 1u64..4096, "[a-z]{1,8}"), 0..3),
        ) {
            let mut c = ScenarioConfig::new(dut, builtin);
            c.seed = seed;
            c.max_cycles = max_cycles;
            c.strict = strict;
            c.firmware.params.m = m;
            c.congestion = CongestionConfig { seed: cseed, ar, w, ..CongestionConfig::uniform(prob, lo, lo + 3) };
            if fixed {
                c.arbitration = ArbitrationConfig {
                    policy: PolicyKind::FixedPriority,
                    order: vec!["input".into(), "weights".into()],
                };
            }
            c.report.window_cycles = window;
            c.report.format = format;
            c.report.dir = Some("out/x".into());
            c.vcd = Some("w.vcd".into());
            c.watch = watch
                .into_iter()
                .map(|(b, l, label)| WatchRegion::new(b, l, crate::memory::WatchMode::Both, label))
                .collect();
            let text = c.to_toml().unwrap();
            let back = ScenarioConfig::from_toml(&text).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
