// SPDX-License-Identifier: Apache-2.0

//! Data-movement profiling: bandwidth utilization per time window, stall
//! counters and address-vs-time heatmaps, exported as CSV and JSON.
//!
//! Utilization of a window is `bytes / (bus_bytes * window_cycles)`; the
//! final window uses its true (possibly shorter) length.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{AccessEvent, AccessKind};

#[derive(Debug, Error)]
pub enum ProfilerError {
    #[error("record for port '{port}' at cycle {cycle} precedes cycle {last}")]
    OutOfOrder { port: String, cycle: u64, last: u64 },
    #[error("unknown port '{0}'")]
    UnknownPort(String),
    #[error("{bytes} bytes exceed the {bus}-byte bus of port '{port}'")]
    TooWide { port: String, bytes: u32, bus: u32 },
    #[error("stalled record for port '{0}' carries data")]
    StalledWithData(String),
    #[error("bucket and window sizes must be at least 1")]
    ZeroBucket,
    #[error("report I/O failed for {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report encoding failed for {path}: {message}")]
    Encode { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatRecord {
    pub cycle: u64,
    pub port: String,
    pub direction: Direction,
    /// Bytes moved; zero on stalled cycles.
    pub bytes: u32,
    pub stalled: bool,
    /// First byte touched, data beats only.
    pub addr: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRecord {
    pub cycle: u64,
    pub addr: u64,
    pub write: bool,
    pub value: u32,
    pub decode_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub start_cycle: u64,
    pub cycles: u64,
    pub bytes: u64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSeries {
    pub port: String,
    pub bus_bytes: u32,
    pub windows: Vec<WindowSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSeries {
    pub window_cycles: u64,
    pub ports: Vec<PortSeries>,
}

impl BandwidthSeries {
    pub fn port(&self, name: &str) -> Option<&PortSeries> {
        self.ports.iter().find(|p| p.port == name)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatCell {
    pub reads: u64,
    pub writes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heatmap {
    pub addr_bucket_bytes: u64,
    pub time_bucket_cycles: u64,
    /// (addr bucket, time bucket) -> counts.
    #[serde(with = "heat_bins")]
    pub bins: BTreeMap<(u64, u64), HeatCell>,
}

impl Heatmap {
    pub fn total(&self) -> u64 {
        self.bins.values().map(|c| c.reads + c.writes).sum()
    }

    pub fn cell(&self, addr_bucket: u64, time_bucket: u64) -> HeatCell {
        self.bins.get(&(addr_bucket, time_bucket)).copied().unwrap_or_default()
    }
}

mod heat_bins {
    use super::HeatCell;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Bin {
        addr_bucket: u64,
        time_bucket: u64,
        reads: u64,
        writes: u64,
    }

    pub fn serialize<S: Serializer>(bins: &BTreeMap<(u64, u64), HeatCell>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Bin> = bins
            .iter()
            .map(|(&(a, t), c)| Bin { addr_bucket: a, time_bucket: t, reads: c.reads, writes: c.writes })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(u64, u64), HeatCell>, D::Error> {
        let v = Vec::<Bin>::deserialize(d)?;
        Ok(v.into_iter()
            .map(|b| ((b.addr_bucket, b.time_bucket), HeatCell { reads: b.reads, writes: b.writes }))
            .collect())
    }
}

#[derive(Debug, Clone)]
struct PortLog {
    name: String,
    bus_bytes: u32,
    last_cycle: Option<u64>,
    records: Vec<BeatRecord>,
}

/// Bundle of everything the profiler exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub total_cycles: u64,
    pub bandwidth: BandwidthSeries,
    pub stalls: BTreeMap<String, u64>,
    pub heatmap: Heatmap,
    pub watch_events: Vec<AccessEvent>,
    pub register_accesses: usize,
    pub decode_errors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportShape {
    pub window_cycles: u64,
    pub addr_bucket_bytes: u64,
    pub time_bucket_cycles: u64,
}

impl Default for ReportShape {
    fn default() -> Self {
        Self { window_cycles: 256, addr_bucket_bytes: 4096, time_bucket_cycles: 256 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Profiler {
    ports: Vec<PortLog>,
    registers: Vec<RegisterRecord>,
    end_cycle: u64,
}

impl Profiler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_port(&mut self, name: &str, bus_bytes: u32) {
        if self.ports.iter().any(|p| p.name == name) {
            return;
        }
        self.ports.push(PortLog {
            name: name.to_string(),
            bus_bytes,
            last_cycle: None,
            records: Vec::new(),
        });
    }

    pub fn port_names(&self) -> Vec<&str> {
        self.ports.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn observe(&mut self, record: BeatRecord) -> Result<(), ProfilerError> {
        let port = self
            .ports
            .iter_mut()
            .find(|p| p.name == record.port)
            .ok_or_else(|| ProfilerError::UnknownPort(record.port.clone()))?;
        if let Some(last) = port.last_cycle {
            if record.cycle < last {
                return Err(ProfilerError::OutOfOrder { port: record.port, cycle: record.cycle, last });
            }
        }
        if record.bytes > port.bus_bytes {
            return Err(ProfilerError::TooWide { port: record.port, bytes: record.bytes, bus: port.bus_bytes });
        }
        if record.stalled && record.bytes != 0 {
            return Err(ProfilerError::StalledWithData(record.port));
        }
        port.last_cycle = Some(record.cycle);
        self.end_cycle = self.end_cycle.max(record.cycle + 1);
        port.records.push(record);
        Ok(())
    }

    pub fn observe_register(&mut self, record: RegisterRecord) {
        self.end_cycle = self.end_cycle.max(record.cycle + 1);
        self.registers.push(record);
    }

    /// Marks the run length so trailing idle cycles are part of the last
    /// window.
    pub fn finish(&mut self, total_cycles: u64) {
        self.end_cycle = self.end_cycle.max(total_cycles);
    }

    pub fn total_cycles(&self) -> u64 {
        self.end_cycle
    }

    pub fn records(&self) -> impl Iterator<Item = &BeatRecord> {
        self.ports.iter().flat_map(|p| p.records.iter())
    }

    pub fn register_records(&self) -> &[RegisterRecord] {
        &self.registers
    }

    pub fn total_bytes(&self, port: &str) -> u64 {
        self.ports
            .iter()
            .filter(|p| p.name == port)
            .flat_map(|p| &p.records)
            .map(|r| r.bytes as u64)
            .sum()
    }

    pub fn bytes_by_direction(&self, dir: Direction) -> u64 {
        self.records().filter(|r| r.direction == dir).map(|r| r.bytes as u64).sum()
    }

    pub fn bandwidth(&self, window_cycles: u64) -> Result<BandwidthSeries, ProfilerError> {
        if window_cycles == 0 {
            return Err(ProfilerError::ZeroBucket);
        }
        let n_windows = self.end_cycle.div_ceil(window_cycles);
        let ports = self
            .ports
            .iter()
            .map(|p| {
                let mut bytes = vec![0u64; n_windows as usize];
                for r in &p.records {
                    bytes[(r.cycle / window_cycles) as usize] += r.bytes as u64;
                }
                let windows = bytes
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let start = i as u64 * window_cycles;
                        let cycles = window_cycles.min(self.end_cycle - start);
                        WindowSample {
                            start_cycle: start,
                            cycles,
                            bytes: b,
                            utilization: b as f64 / (p.bus_bytes as u64 * cycles) as f64,
                        }
                    })
                    .collect();
                PortSeries { port: p.name.clone(), bus_bytes: p.bus_bytes, windows }
            })
            .collect();
        Ok(BandwidthSeries { window_cycles, ports })
    }

    /// Distinct stalled cycles per port.
    pub fn stalls(&self) -> BTreeMap<String, u64> {
        self.ports
            .iter()
            .map(|p| {
                let cycles: BTreeSet<u64> = p.records.iter().filter(|r| r.stalled).map(|r| r.cycle).collect();
                (p.name.clone(), cycles.len() as u64)
            })
            .collect()
    }

    pub fn heatmap(&self, addr_bucket: u64, time_bucket: u64) -> Result<Heatmap, ProfilerError> {
        if addr_bucket == 0 || time_bucket == 0 {
            return Err(ProfilerError::ZeroBucket);
        }
        let mut bins: BTreeMap<(u64, u64), HeatCell> = BTreeMap::new();
        for r in self.records().filter(|r| !r.stalled) {
            let Some(addr) = r.addr else { continue };
            let cell = bins.entry((addr / addr_bucket, r.cycle / time_bucket)).or_default();
            match r.direction {
                Direction::Read => cell.reads += 1,
                Direction::Write => cell.writes += 1,
            }
        }
        Ok(Heatmap { addr_bucket_bytes: addr_bucket, time_bucket_cycles: time_bucket, bins })
    }

    pub fn bundle(&self, shape: ReportShape, watch_events: Vec<AccessEvent>) -> Result<ReportBundle, ProfilerError> {
        Ok(ReportBundle {
            total_cycles: self.end_cycle,
            bandwidth: self.bandwidth(shape.window_cycles)?,
            stalls: self.stalls(),
            heatmap: self.heatmap(shape.addr_bucket_bytes, shape.time_bucket_cycles)?,
            watch_events,
            register_accesses: self.registers.len(),
            decode_errors: self.registers.iter().filter(|r| r.decode_error).count(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Serialize)]
struct BandwidthRow<'a> {
    window_start_cycle: u64,
    port: &'a str,
    bytes: u64,
    utilization: f64,
}

#[derive(Serialize)]
struct StallRow<'a> {
    port: &'a str,
    stall_cycles: u64,
}

#[derive(Serialize)]
struct HeatRow {
    addr_bucket: u64,
    time_bucket: u64,
    reads: u64,
    writes: u64,
}

fn csv_err(path: &Path, e: csv::Error) -> ProfilerError {
    ProfilerError::Encode { path: path.to_path_buf(), message: e.to_string() }
}

fn write_csv<T: Serialize>(path: &Path, headers: &[&str], rows: impl IntoIterator<Item = T>) -> Result<(), ProfilerError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(headers).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| ProfilerError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, bytes).map_err(|source| ProfilerError::Io { path: path.to_path_buf(), source })
}

impl ReportBundle {
    /// Writes `bandwidth.csv`, `stalls.csv` and `heatmap.csv` (CSV) or
    /// `report.json` (JSON) into `dir`.
    pub fn export(&self, format: ExportFormat, dir: &Path) -> Result<Vec<PathBuf>, ProfilerError> {
        fs::create_dir_all(dir).map_err(|source| ProfilerError::Io { path: dir.to_path_buf(), source })?;
        match format {
            ExportFormat::Csv => {
                let bw = dir.join("bandwidth.csv");
                let mut rows = Vec::new();
                // window-major order, ports in attachment order
                let n = self.bandwidth.ports.iter().map(|p| p.windows.len()).max().unwrap_or(0);
                for i in 0..n {
                    for p in &self.bandwidth.ports {
                        if let Some(w) = p.windows.get(i) {
                            rows.push(BandwidthRow {
                                window_start_cycle: w.start_cycle,
                                port: &p.port,
                                bytes: w.bytes,
                                utilization: w.utilization,
                            });
                        }
                    }
                }
                write_csv(&bw, &["window_start_cycle", "port", "bytes", "utilization"], rows)?;

                let st = dir.join("stalls.csv");
                write_csv(
                    &st,
                    &["port", "stall_cycles"],
                    self.stalls.iter().map(|(p, &c)| StallRow { port: p, stall_cycles: c }),
                )?;

                let hm = dir.join("heatmap.csv");
                write_csv(
                    &hm,
                    &["addr_bucket", "time_bucket", "reads", "writes"],
                    self.heatmap.bins.iter().map(|(&(a, t), c)| HeatRow {
                        addr_bucket: a,
                        time_bucket: t,
                        reads: c.reads,
                        writes: c.writes,
                    }),
                )?;
                Ok(vec![bw, st, hm])
            }
            ExportFormat::Json => {
                let path = dir.join("report.json");
                let text = serde_json::to_string_pretty(self).map_err(|e| ProfilerError::Encode {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                fs::write(&path, text + "\n").map_err(|source| ProfilerError::Io { path: path.clone(), source })?;
                Ok(vec![path])
            }
        }
    }

    /// Total bytes represented in the bandwidth series.
    pub fn window_bytes(&self) -> u64 {
        self.bandwidth.ports.iter().flat_map(|p| &p.windows).map(|w| w.bytes).sum()
    }

    pub fn watch_writes(&self) -> usize {
        self.watch_events.iter().filter(|e| e.kind == AccessKind::Write).count()
    }
}
