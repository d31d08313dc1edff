// SPDX-License-Identifier: Apache-2.0

//! Value-change-dump output. One VCD time unit is one clock cycle.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use vcd::{IdCode, TimescaleUnit, Value};

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("signal '{0}' declared after sampling started")]
    LateDeclaration(String),
    #[error("signal '{0}' declared twice in the same scope")]
    Duplicate(String),
    #[error("signal '{0}' must be at least one bit wide")]
    ZeroWidth(String),
    #[error("expected {expected} values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("value for '{name}' does not fit in {width} bits")]
    WidthMismatch { name: String, width: u32 },
    #[error("cycle {cycle} is not after previous sample {last}")]
    TimeOrder { cycle: u64, last: u64 },
    #[error("failed to write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignalId(pub usize);

#[derive(Debug, Clone)]
pub struct TracedSignal {
    pub scope: Vec<String>,
    pub name: String,
    pub width: u32,
    value: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct VcdOptions {
    pub date: String,
    pub version: String,
}

impl Default for VcdOptions {
    fn default() -> Self {
        Self {
            // Fixed so identical runs produce identical files.
            date: "1970-01-01T00:00:00Z".into(),
            version: concat!("cosim ", env!("CARGO_PKG_VERSION")).into(),
        }
    }
}

/// Buffered VCD trace: declare signals, sample once per cycle, finalize.
pub struct VcdTrace {
    opts: VcdOptions,
    signals: Vec<TracedSignal>,
    writer: Option<vcd::Writer<Vec<u8>>>,
    last_cycle: Option<u64>,
}

impl std::fmt::Debug for VcdTrace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VcdTrace").field("signals", &self.signals.len()).finish()
    }
}

fn fits(bytes: &[u8], width: u32) -> bool {
    bytes.iter().enumerate().all(|(i, &b)| {
        let lo = i as u32 * 8;
        if lo >= width {
            b == 0
        } else if width - lo >= 8 {
            true
        } else {
            b >> (width - lo) == 0
        }
    })
}

fn bits(bytes: &[u8], width: u32) -> Vec<Value> {
    // MSB first, leading zeros trimmed (VCD left-extends with 0).
    let mut out: Vec<Value> = (0..width)
        .rev()
        .map(|i| {
            let b = bytes.get((i / 8) as usize).copied().unwrap_or(0);
            if (b >> (i % 8)) & 1 == 1 {
                Value::V1
            } else {
                Value::V0
            }
        })
        .skip_while(|v| *v == Value::V0)
        .collect();
    if out.is_empty() {
        out.push(Value::V0);
    }
    out
}

impl VcdTrace {
    pub fn new(opts: VcdOptions) -> Self {
        Self { opts, signals: Vec::new(), writer: None, last_cycle: None }
    }

    pub fn signals(&self) -> &[TracedSignal] {
        &self.signals
    }

    pub fn declare(&mut self, scope: &[&str], name: &str, width: u32) -> Result<SignalId, WaveformError> {
        let full = format!("{}.{}", scope.join("."), name);
        if self.writer.is_some() {
            return Err(WaveformError::LateDeclaration(full));
        }
        if width == 0 {
            return Err(WaveformError::ZeroWidth(full));
        }
        if self.signals.iter().any(|s| s.name == name && s.scope.iter().map(String::as_str).eq(scope.iter().copied())) {
            return Err(WaveformError::Duplicate(full));
        }
        self.signals.push(TracedSignal {
            scope: scope.iter().map(|s| s.to_string()).collect(),
            name: name.to_string(),
            width,
            value: None,
        });
        Ok(SignalId(self.signals.len() - 1))
    }

    fn write_header(&mut self) -> std::io::Result<()> {
        let mut w = vcd::Writer::new(Vec::new());
        w.date(&self.opts.date)?;
        w.version(&self.opts.version)?;
        w.timescale(1, TimescaleUnit::NS)?;

        // Scopes in first-appearance order; ids in declaration order.
        let mut order: Vec<Vec<String>> = Vec::new();
        for s in &self.signals {
            if !order.contains(&s.scope) {
                order.push(s.scope.clone());
            }
        }
        let mut open: Vec<String> = Vec::new();
        for scope in &order {
            let common = open.iter().zip(scope).take_while(|(a, b)| a == b).count();
            while open.len() > common {
                w.upscope()?;
                open.pop();
            }
            for part in &scope[common..] {
                w.add_module(part)?;
                open.push(part.clone());
            }
            for (i, s) in self.signals.iter().enumerate() {
                if &s.scope == scope {
                    w.var_def(vcd::VarType::Wire, s.width, IdCode::from(i as u64), &s.name, None)?;
                }
            }
        }
        while open.pop().is_some() {
            w.upscope()?;
        }
        w.enddefinitions()?;
        self.writer = Some(w);
        Ok(())
    }

    /// Records the values of every declared signal at `cycle`. Values are
    /// little-endian byte strings; only changes are emitted.
    pub fn sample_cycle(&mut self, cycle: u64, values: &[&[u8]]) -> Result<(), WaveformError> {
        if values.len() != self.signals.len() {
            return Err(WaveformError::ValueCount { expected: self.signals.len(), got: values.len() });
        }
        if let Some(last) = self.last_cycle {
            if cycle <= last {
                return Err(WaveformError::TimeOrder { cycle, last });
            }
        }
        for (s, v) in self.signals.iter().zip(values) {
            if !fits(v, s.width) {
                return Err(WaveformError::WidthMismatch { name: s.name.clone(), width: s.width });
            }
        }
        let io = |e: std::io::Error| WaveformError::Io { path: PathBuf::from("<buffer>"), source: e };
        if self.writer.is_none() {
            self.write_header().map_err(io)?;
        }
        let first = self.last_cycle.is_none();
        self.last_cycle = Some(cycle);
        let w = self.writer.as_mut().expect("header written");
        let mut stamped = false;
        for (i, (s, v)) in self.signals.iter_mut().zip(values).enumerate() {
            let trimmed = {
                let mut t = v.to_vec();
                while t.last() == Some(&0) {
                    t.pop();
                }
                t
            };
            if s.value.as_ref() == Some(&trimmed) {
                continue;
            }
            if !stamped {
                w.timestamp(cycle).map_err(io)?;
                if first {
                    w.begin(vcd::SimulationCommand::Dumpvars).map_err(io)?;
                }
                stamped = true;
            }
            let id = IdCode::from(i as u64);
            if s.width == 1 {
                let bit = if trimmed.is_empty() { Value::V0 } else { Value::V1 };
                w.change_scalar(id, bit).map_err(io)?;
            } else {
                w.change_vector(id, bits(&trimmed, s.width)).map_err(io)?;
            }
            s.value = Some(trimmed);
        }
        if first && stamped {
            w.end().map_err(io)?;
        }
        Ok(())
    }

    /// Rendered file contents so far.
    pub fn contents(&mut self) -> Vec<u8> {
        if self.writer.is_none() {
            let _ = self.write_header();
        }
        self.writer.as_mut().map(|w| w.writer().clone()).unwrap_or_default()
    }

    pub fn finalize(mut self, path: &Path) -> Result<(), WaveformError> {
        let bytes = self.contents();
        fs::write(path, bytes).map_err(|source| WaveformError::Io { path: path.to_path_buf(), source })
    }
}
