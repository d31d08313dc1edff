// SPDX-License-Identifier: Apache-2.0

//! Sparse host-side DDR image.
//!
//! Firmware touches it directly at zero simulated cost; hardware reaches it
//! only through the memory bridge. Both paths are checked against the watch
//! regions and logged with their origin.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAGE_SIZE: u64 = 4096;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("unknown watch id {0}")]
    UnknownWatch(u32),
    #[error("watch region '{0}' has zero length")]
    EmptyWatch(String),
    #[error("failed to read image {path}: {source}")]
    ImageRead { path: PathBuf, source: std::io::Error },
    #[error("failed to write image {path}: {source}")]
    ImageWrite { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WatchMode {
    Read,
    Write,
    Both,
}

impl WatchMode {
    fn matches(self, kind: AccessKind) -> bool {
        matches!(
            (self, kind),
            (WatchMode::Both, _) | (WatchMode::Read, AccessKind::Read) | (WatchMode::Write, AccessKind::Write)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchRegion {
    pub base: u64,
    pub length: u64,
    pub mode: WatchMode,
    pub label: String,
}

impl WatchRegion {
    pub fn new(base: u64, length: u64, mode: WatchMode, label: impl Into<String>) -> Self {
        Self { base, length, mode, label: label.into() }
    }

    pub fn overlaps(&self, addr: u64, len: u64) -> bool {
        len > 0 && addr < self.base.saturating_add(self.length) && self.base < addr.saturating_add(len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WatchId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Firmware,
    Port(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Firmware => f.write_str("firmware"),
            Origin::Port(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEvent {
    pub cycle: u64,
    pub origin: Origin,
    pub kind: AccessKind,
    pub addr: u64,
    pub length: u64,
}

/// Byte counters of traffic that crossed the bus side of the image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusTraffic {
    pub bytes_read: u64,
    pub bytes_written: u64,
}

#[derive(Debug, Clone)]
pub struct MemoryImage {
    pages: BTreeMap<u64, Box<[u8]>>,
    fill: u8,
    watches: BTreeMap<WatchId, WatchRegion>,
    next_watch: u32,
    log: Vec<AccessEvent>,
    now: u64,
    bus: BusTraffic,
}

impl Default for MemoryImage {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryImage {
    pub fn new() -> Self {
        Self::with_fill(0)
    }

    pub fn with_fill(fill: u8) -> Self {
        Self {
            pages: BTreeMap::new(),
            fill,
            watches: BTreeMap::new(),
            next_watch: 0,
            log: Vec::new(),
            now: 0,
            bus: BusTraffic::default(),
        }
    }

    /// Cycle stamped on subsequent access events.
    pub fn set_time(&mut self, cycle: u64) {
        self.now = cycle;
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn bus_traffic(&self) -> BusTraffic {
        self.bus
    }

    /// Host-side (firmware) write.
    pub fn write_bytes(&mut self, addr: u64, data: &[u8]) {
        self.note(Origin::Firmware, AccessKind::Write, addr, data.len() as u64);
        self.store(addr, data);
    }

    /// Host-side (firmware) read.
    pub fn read_bytes(&mut self, addr: u64, len: usize) -> Vec<u8> {
        self.note(Origin::Firmware, AccessKind::Read, addr, len as u64);
        self.peek(addr, len)
    }

    /// Bridge-side read on behalf of manager port `port`.
    pub fn bus_read(&mut self, port: &str, addr: u64, len: usize) -> Vec<u8> {
        self.note(Origin::Port(port.to_string()), AccessKind::Read, addr, len as u64);
        self.bus.bytes_read += len as u64;
        self.peek(addr, len)
    }

    /// Bridge-side masked write: byte `i` is stored only if `enable[i]`.
    /// Logged as a single access covering `[addr, addr + data.len())`.
    pub fn bus_write(&mut self, port: &str, addr: u64, data: &[u8], enable: &[bool]) {
        debug_assert_eq!(data.len(), enable.len());
        self.note(Origin::Port(port.to_string()), AccessKind::Write, addr, data.len() as u64);
        for (i, (&b, &en)) in data.iter().zip(enable).enumerate() {
            if en {
                self.store(addr + i as u64, &[b]);
                self.bus.bytes_written += 1;
            }
        }
    }

    /// Unlogged read, for inspection by tests and tooling.
    pub fn peek(&self, addr: u64, len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        let mut a = addr;
        let end = addr + len as u64;
        while a < end {
            let page = a / PAGE_SIZE;
            let off = (a % PAGE_SIZE) as usize;
            let n = ((PAGE_SIZE as usize - off) as u64).min(end - a) as usize;
            match self.pages.get(&page) {
                Some(p) => out.extend_from_slice(&p[off..off + n]),
                None => out.extend(std::iter::repeat_n(self.fill, n)),
            }
            a += n as u64;
        }
        out
    }

    /// Unlogged write, used for image loading.
    pub fn poke(&mut self, addr: u64, data: &[u8]) {
        self.store(addr, data);
    }

    fn store(&mut self, addr: u64, data: &[u8]) {
        let mut done = 0usize;
        while done < data.len() {
            let a = addr + done as u64;
            let page = a / PAGE_SIZE;
            let off = (a % PAGE_SIZE) as usize;
            let n = (PAGE_SIZE as usize - off).min(data.len() - done);
            let fill = self.fill;
            let p = self
                .pages
                .entry(page)
                .or_insert_with(|| vec![fill; PAGE_SIZE as usize].into_boxed_slice());
            p[off..off + n].copy_from_slice(&data[done..done + n]);
            done += n;
        }
    }

    fn note(&mut self, origin: Origin, kind: AccessKind, addr: u64, length: u64) {
        let hit = self
            .watches
            .values()
            .any(|w| w.mode.matches(kind) && w.overlaps(addr, length));
        if hit {
            self.log.push(AccessEvent { cycle: self.now, origin, kind, addr, length });
        }
    }

    pub fn add_watch(&mut self, region: WatchRegion) -> Result<WatchId, MemoryError> {
        if region.length == 0 {
            return Err(MemoryError::EmptyWatch(region.label));
        }
        let id = WatchId(self.next_watch);
        self.next_watch += 1;
        self.watches.insert(id, region);
        Ok(id)
    }

    pub fn remove_watch(&mut self, id: WatchId) -> Result<WatchRegion, MemoryError> {
        self.watches.remove(&id).ok_or(MemoryError::UnknownWatch(id.0))
    }

    pub fn watches(&self) -> impl Iterator<Item = (&WatchId, &WatchRegion)> {
        self.watches.iter()
    }

    /// Drains the access log.
    pub fn take_access_log(&mut self) -> Vec<AccessEvent> {
        std::mem::take(&mut self.log)
    }

    pub fn access_log(&self) -> &[AccessEvent] {
        &self.log
    }

    /// Loads a raw binary file at `base`, returning the byte count.
    pub fn load_image(&mut self, path: &Path, base: u64) -> Result<usize, MemoryError> {
        let data = fs::read(path).map_err(|source| MemoryError::ImageRead {
            path: path.to_path_buf(),
            source,
        })?;
        self.poke(base, &data);
        Ok(data.len())
    }

    /// Writes `len` bytes starting at `base` to a raw binary file.
    pub fn store_image(&self, path: &Path, base: u64, len: usize) -> Result<(), MemoryError> {
        fs::write(path, self.peek(base, len)).map_err(|source| MemoryError::ImageWrite {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Content equality, treating untouched pages as filled.
    pub fn same_contents(&self, other: &MemoryImage) -> bool {
        let keys: std::collections::BTreeSet<u64> = self.pages.keys().chain(other.pages.keys()).copied().collect();
        keys.into_iter().all(|k| self.peek(k * PAGE_SIZE, PAGE_SIZE as usize) == other.peek(k * PAGE_SIZE, PAGE_SIZE as usize))
    }
}
