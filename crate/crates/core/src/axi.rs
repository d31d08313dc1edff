// SPDX-License-Identifier: Apache-2.0

//! AXI4 channel vocabulary, INCR burst arithmetic and the trace conformance
//! checker shared by bridges, reference DUTs and the congestion emulator.
//!
//! Only the subset needed by DMA-style managers is modelled: INCR bursts,
//! in-order responses per ID, byte strobes on write data.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signals::{ChannelClass, ChannelInfo, ChannelSample, ChannelTrace};

/// Default data-bus width: 128-bit high-performance ports.
pub const DEFAULT_BUS_BYTES: usize = 16;
/// Largest beat count of a single INCR burst.
pub const MAX_BURST_BEATS: usize = 256;
/// Bursts may not cross this boundary.
pub const BOUNDARY_4K: u64 = 4096;
/// Widest supported data bus (strobes are carried in a `u64`).
pub const MAX_BUS_BYTES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BurstKind {
    Fixed,
    Incr,
    Wrap,
}

/// AR / AW payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AddrBeat {
    pub id: u8,
    pub addr: u64,
    pub len_m1: u8,
    pub size_log2: u8,
    pub burst: BurstKind,
}

impl AddrBeat {
    pub fn incr(id: u8, addr: u64, beats: usize, size_log2: u8) -> Self {
        assert!((1..=MAX_BURST_BEATS).contains(&beats), "burst of {beats} beats");
        Self {
            id,
            addr,
            len_m1: (beats - 1) as u8,
            size_log2,
            burst: BurstKind::Incr,
        }
    }

    pub fn beats(&self) -> usize {
        self.len_m1 as usize + 1
    }

    pub fn beat_bytes(&self) -> usize {
        1 << self.size_log2
    }

    /// Total bytes covered by the burst.
    pub fn span(&self) -> u64 {
        (self.beats() * self.beat_bytes()) as u64
    }

    /// Address of beat `n` of this burst.
    pub fn beat_addr(&self, n: usize) -> u64 {
        beat_address(self.addr, self.size_log2, n)
    }

    /// Issue-time legality against a bus of `bus_bytes`.
    pub fn validate(&self, bus_bytes: usize) -> Result<(), BurstError> {
        if self.burst != BurstKind::Incr {
            return Err(BurstError::UnsupportedBurst(self.burst));
        }
        if self.beat_bytes() > bus_bytes {
            return Err(BurstError::SizeExceedsBus {
                size: self.beat_bytes(),
                bus: bus_bytes,
            });
        }
        if crosses_4k(self.addr, self.len_m1, self.size_log2) {
            return Err(BurstError::Crosses4K { addr: self.addr, span: self.span() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BurstError {
    #[error("burst type {0:?} is not supported (INCR only)")]
    UnsupportedBurst(BurstKind),
    #[error("beat size {size} exceeds bus width {bus}")]
    SizeExceedsBus { size: usize, bus: usize },
    #[error("burst at {addr:#x} spanning {span} bytes crosses a 4 KiB boundary")]
    Crosses4K { addr: u64, span: u64 },
}

/// R / W payload. `strb` is only meaningful on write data; bit `i` enables
/// byte lane `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataBeat {
    pub id: u8,
    pub data: Vec<u8>,
    pub strb: u64,
    pub last: bool,
}

impl DataBeat {
    pub fn read(id: u8, data: Vec<u8>, last: bool) -> Self {
        Self { id, data, strb: 0, last }
    }

    pub fn write(data: Vec<u8>, last: bool) -> Self {
        let strb = lane_mask(data.len());
        Self { id: 0, data, strb, last }
    }

    /// Number of enabled byte lanes within the first `beat_bytes` lanes.
    pub fn strobed_bytes(&self, beat_bytes: usize) -> usize {
        (self.strb & lane_mask(beat_bytes)).count_ones() as usize
    }
}

pub fn lane_mask(bytes: usize) -> u64 {
    if bytes >= 64 {
        u64::MAX
    } else {
        (1u64 << bytes) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resp {
    Okay,
    SlvErr,
}

/// B payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RespBeat {
    pub id: u8,
    pub resp: Resp,
}

/// Address of beat `n` of an INCR burst.
pub fn beat_address(start_addr: u64, size_log2: u8, n: usize) -> u64 {
    start_addr + ((n as u64) << size_log2)
}

/// True if an INCR burst starting at `addr` touches two 4 KiB pages.
pub fn crosses_4k(addr: u64, len_m1: u8, size_log2: u8) -> bool {
    let last_byte = beat_address(addr, size_log2, len_m1 as usize) + (1u64 << size_log2) - 1;
    addr / BOUNDARY_4K != last_byte / BOUNDARY_4K
}

/// A payload transfers exactly when both sides assert at the same boundary.
pub fn handshake_fired(valid: bool, ready: bool) -> bool {
    valid && ready
}

/// Rules enforced by [`check_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// VALID retracted, or payload changed, before the handshake.
    #[serde(rename = "VS")]
    ValidStability,
    /// LAST inconsistent with the declared burst length.
    #[serde(rename = "LAST")]
    Last,
    /// Data-beat count differs from `len_m1 + 1`.
    #[serde(rename = "CNT")]
    BeatCount,
    /// Not exactly one write response per write burst.
    #[serde(rename = "B1")]
    OneResponse,
    /// Burst crosses a 4 KiB boundary.
    #[serde(rename = "4KB")]
    Boundary4K,
    /// Non-INCR burst or beat size wider than the bus.
    #[serde(rename = "BURST")]
    BurstShape,
}

impl Rule {
    pub fn code(self) -> &'static str {
        match self {
            Rule::ValidStability => "VS",
            Rule::Last => "LAST",
            Rule::BeatCount => "CNT",
            Rule::OneResponse => "B1",
            Rule::Boundary4K => "4KB",
            Rule::BurstShape => "BURST",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolViolation {
    pub cycle: u64,
    pub channel: String,
    pub rule: Rule,
    pub description: String,
}

impl fmt::Display for ProtocolViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cycle {}: [{}] {}: {}",
            self.cycle, self.rule, self.channel, self.description
        )
    }
}

#[derive(Debug, Default)]
struct PortState {
    ar: Option<usize>,
    r: Option<usize>,
    aw: Option<usize>,
    w: Option<usize>,
    b: Option<usize>,
    /// Outstanding read bursts per ID: (declared beats, beats seen, addr).
    reads: BTreeMap<u8, VecDeque<OpenBurst>>,
    /// Write bursts whose data is still arriving, in AW order.
    writes: VecDeque<OpenBurst>,
    /// W beats that arrived ahead of their AW.
    early_w: VecDeque<bool>,
    /// Write bursts with all data received, awaiting a response.
    awaiting_b: usize,
    bus_bytes: usize,
}

#[derive(Debug, Clone)]
struct OpenBurst {
    addr: u64,
    beats: usize,
    seen: usize,
}

/// Incremental form of [`check_trace`]; the kernel runs one online.
#[derive(Debug)]
pub struct ProtocolChecker {
    channels: Vec<ChannelInfo>,
    ports: BTreeMap<String, PortState>,
    prev: Option<Vec<ChannelSample>>,
    violations: Vec<ProtocolViolation>,
}

impl ProtocolChecker {
    pub fn new(channels: &[ChannelInfo]) -> Self {
        let mut ports: BTreeMap<String, PortState> = BTreeMap::new();
        for (i, ch) in channels.iter().enumerate() {
            if ch.class == ChannelClass::Stream {
                continue;
            }
            let p = ports.entry(ch.group.clone()).or_default();
            p.bus_bytes = p.bus_bytes.max(ch.width_bytes);
            match ch.class {
                ChannelClass::Ar => p.ar = Some(i),
                ChannelClass::R => p.r = Some(i),
                ChannelClass::Aw => p.aw = Some(i),
                ChannelClass::W => p.w = Some(i),
                ChannelClass::B => p.b = Some(i),
                ChannelClass::Stream => {}
            }
        }
        Self {
            channels: channels.to_vec(),
            ports,
            prev: None,
            violations: Vec::new(),
        }
    }

    fn flag(&mut self, cycle: u64, ch: usize, rule: Rule, description: String) {
        self.violations.push(ProtocolViolation {
            cycle,
            channel: self.channels[ch].name.clone(),
            rule,
            description,
        });
    }

    /// Feeds the committed samples of one cycle; returns how many new
    /// violations were found.
    pub fn observe_cycle(&mut self, cycle: u64, samples: &[ChannelSample]) -> usize {
        assert_eq!(samples.len(), self.channels.len(), "sample/channel count mismatch");
        let before = self.violations.len();

        if let Some(prev) = self.prev.take() {
            for (i, (p, s)) in prev.iter().zip(samples).enumerate() {
                if p.valid && !p.ready {
                    if !s.valid {
                        self.flag(cycle, i, Rule::ValidStability, "VALID retracted before handshake".into());
                    } else if p.payload != s.payload {
                        self.flag(cycle, i, Rule::ValidStability, "payload changed while stalled".into());
                    }
                }
            }
        }

        let names: Vec<String> = self.ports.keys().cloned().collect();
        for name in names {
            self.check_port(cycle, &name, samples);
        }

        self.prev = Some(samples.to_vec());
        self.violations.len() - before
    }

    fn check_port(&mut self, cycle: u64, name: &str, samples: &[ChannelSample]) {
        let mut port = self.ports.remove(name).expect("port exists");
        let fired = |i: Option<usize>| i.filter(|&i| samples[i].valid && samples[i].ready);

        if let Some(i) = fired(port.ar) {
            if let Some(a) = samples[i].payload.as_ref().and_then(|b| b.as_addr()) {
                self.check_addr(cycle, i, a, port.bus_bytes);
                port.reads.entry(a.id).or_default().push_back(OpenBurst {
                    addr: a.addr,
                    beats: a.beats(),
                    seen: 0,
                });
            }
        }
        if let Some(i) = fired(port.aw) {
            if let Some(a) = samples[i].payload.as_ref().and_then(|b| b.as_addr()) {
                self.check_addr(cycle, i, a, port.bus_bytes);
                let mut burst = OpenBurst { addr: a.addr, beats: a.beats(), seen: 0 };
                let mut closed = false;
                while let Some(last) = port.early_w.pop_front() {
                    closed = self.data_beat(cycle, port.w.unwrap_or(i), &mut burst, last);
                    if closed {
                        port.awaiting_b += 1;
                        break;
                    }
                }
                if !closed {
                    port.writes.push_back(burst);
                }
            }
        }
        if let Some(i) = fired(port.r) {
            if let Some(d) = samples[i].payload.as_ref().and_then(|b| b.as_data()) {
                let queue = port.reads.entry(d.id).or_default();
                match queue.pop_front() {
                    Some(mut burst) => {
                        if !self.data_beat(cycle, i, &mut burst, d.last) {
                            queue.push_front(burst);
                        }
                    }
                    None => self.flag(
                        cycle,
                        i,
                        Rule::BeatCount,
                        format!("read data beat for ID {} with no outstanding burst", d.id),
                    ),
                }
            }
        }
        if let Some(i) = fired(port.w) {
            if let Some(d) = samples[i].payload.as_ref().and_then(|b| b.as_data()) {
                match port.writes.pop_front() {
                    Some(mut burst) => {
                        if self.data_beat(cycle, i, &mut burst, d.last) {
                            port.awaiting_b += 1;
                        } else {
                            port.writes.push_front(burst);
                        }
                    }
                    None => port.early_w.push_back(d.last),
                }
            }
        }
        if let Some(i) = fired(port.b) {
            if port.awaiting_b == 0 {
                self.flag(
                    cycle,
                    i,
                    Rule::OneResponse,
                    "write response without a completed write burst".into(),
                );
            } else {
                port.awaiting_b -= 1;
            }
        }
        self.ports.insert(name.to_string(), port);
    }

    fn check_addr(&mut self, cycle: u64, ch: usize, a: &AddrBeat, bus_bytes: usize) {
        match a.validate(bus_bytes) {
            Ok(()) => {}
            Err(e @ BurstError::Crosses4K { .. }) => self.flag(cycle, ch, Rule::Boundary4K, e.to_string()),
            Err(e) => self.flag(cycle, ch, Rule::BurstShape, e.to_string()),
        }
    }

    /// Accounts one data beat against `burst`; returns true if the burst is
    /// now closed.
    fn data_beat(&mut self, cycle: u64, ch: usize, burst: &mut OpenBurst, last: bool) -> bool {
        burst.seen += 1;
        if burst.seen == burst.beats {
            if !last {
                self.flag(
                    cycle,
                    ch,
                    Rule::Last,
                    format!("LAST missing on final beat {} of burst at {:#x}", burst.seen, burst.addr),
                );
            }
            return true;
        }
        if last {
            self.flag(
                cycle,
                ch,
                Rule::Last,
                format!(
                    "LAST asserted on beat {} of {}-beat burst at {:#x}",
                    burst.seen, burst.beats, burst.addr
                ),
            );
            self.flag(
                cycle,
                ch,
                Rule::BeatCount,
                format!("burst at {:#x} declared {} beats, delivered {}", burst.addr, burst.beats, burst.seen),
            );
            return true;
        }
        false
    }

    pub fn violations(&self) -> &[ProtocolViolation] {
        &self.violations
    }

    pub fn finish(self) -> Vec<ProtocolViolation> {
        self.violations
    }

    /// Human-readable description of every burst that has not completed,
    /// naming the channel it is waiting on. Used for hang diagnostics.
    pub fn outstanding(&self) -> Vec<StuckChannel> {
        let last = self.prev.as_deref();
        let sample = |i: Option<usize>| -> (bool, bool) {
            match (i, last) {
                (Some(i), Some(s)) => (s[i].valid, s[i].ready),
                _ => (false, false),
            }
        };
        let mut out = Vec::new();
        for (name, p) in &self.ports {
            for burst in &p.writes {
                let (valid, ready) = sample(p.w);
                out.push(StuckChannel {
                    port: name.clone(),
                    channel: ChannelClass::W,
                    detail: format!(
                        "write burst at {:#x} received {} of {} beats; {}",
                        burst.addr,
                        burst.seen,
                        burst.beats,
                        blame(valid, ready, "WVALID", "WREADY")
                    ),
                });
            }
            if p.awaiting_b > 0 {
                let (valid, ready) = sample(p.b);
                out.push(StuckChannel {
                    port: name.clone(),
                    channel: ChannelClass::B,
                    detail: format!(
                        "{} write response(s) outstanding; {}",
                        p.awaiting_b,
                        blame(valid, ready, "BVALID", "BREADY")
                    ),
                });
            }
            for queue in p.reads.values() {
                for burst in queue {
                    let (valid, ready) = sample(p.r);
                    out.push(StuckChannel {
                        port: name.clone(),
                        channel: ChannelClass::R,
                        detail: format!(
                            "read burst at {:#x} delivered {} of {} beats; {}",
                            burst.addr,
                            burst.seen,
                            burst.beats,
                            blame(valid, ready, "RVALID", "RREADY")
                        ),
                    });
                }
            }
            for (class, idx) in [(ChannelClass::Ar, p.ar), (ChannelClass::Aw, p.aw)] {
                let (valid, ready) = sample(idx);
                if valid && !ready {
                    out.push(StuckChannel {
                        port: name.clone(),
                        channel: class,
                        detail: "address beat held with VALID asserted, READY withheld".into(),
                    });
                }
            }
        }
        out
    }
}

fn blame(valid: bool, ready: bool, v: &str, r: &str) -> String {
    match (valid, ready) {
        (false, _) => format!("{v} deasserted upstream"),
        (true, false) => format!("{v} asserted, {r} withheld downstream"),
        (true, true) => "handshake in progress".to_string(),
    }
}

/// A channel with an incomplete transaction at the time a run stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StuckChannel {
    pub port: String,
    pub channel: ChannelClass,
    pub detail: String,
}

impl fmt::Display for StuckChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "port '{}' {} channel stuck: {}", self.port, self.channel, self.detail)
    }
}

/// Checks a complete per-cycle channel trace against the conformance rules.
pub fn check_trace(trace: &ChannelTrace) -> Vec<ProtocolViolation> {
    let mut checker = ProtocolChecker::new(&trace.channels);
    for (cycle, samples) in trace.cycles.iter().enumerate() {
        checker.observe_cycle(cycle as u64, samples);
    }
    checker.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::Beat;

    #[test]
    fn beat_address_arithmetic() {
        assert_eq!(beat_address(0x100, 4, 2), 0x120);
        assert_eq!(beat_address(0x100, 4, 0), 0x100);
        assert_eq!(beat_address(0x0FF0, 4, 1), 0x1000);
        assert!(crosses_4k(0x0FF0, 1, 4));
        assert!(!crosses_4k(0x0FF0, 0, 4));
        assert!(!crosses_4k(0x0000, 255, 4));
        assert!(crosses_4k(0x0010, 255, 4));
        let a = AddrBeat::incr(0, 0x0FF0, 2, 4);
        assert!(matches!(a.validate(16), Err(BurstError::Crosses4K { .. })));
    }

    #[test]
    fn crossing_matches_page_enumeration() {
        for addr in (0..0x3000u64).step_by(16) {
            for beats in [1usize, 2, 7, 16, 255, 256] {
                let pages: std::collections::BTreeSet<u64> =
                    (0..beats as u64 * 16).map(|o| (addr + o) / 4096).collect();
                assert_eq!(crosses_4k(addr, (beats - 1) as u8, 4), pages.len() > 1, "{addr:#x} {beats}");
            }
        }
    }

    #[test]
    fn handshake_truth_table() {
        assert!(handshake_fired(true, true));
        assert!(!handshake_fired(true, false));
        assert!(!handshake_fired(false, true));
        assert!(!handshake_fired(false, false));
    }

    #[test]
    fn rejects_fixed_and_wide_bursts() {
        let mut a = AddrBeat::incr(0, 0, 1, 4);
        a.burst = BurstKind::Wrap;
        assert_eq!(a.validate(16), Err(BurstError::UnsupportedBurst(BurstKind::Wrap)));
        let a = AddrBeat::incr(0, 0, 1, 5);
        assert!(matches!(a.validate(16), Err(BurstError::SizeExceedsBus { .. })));
    }

    fn port_channels() -> Vec<ChannelInfo> {
        [
            ("p.ar", ChannelClass::Ar),
            ("p.r", ChannelClass::R),
            ("p.aw", ChannelClass::Aw),
            ("p.w", ChannelClass::W),
            ("p.b", ChannelClass::B),
        ]
        .into_iter()
        .map(|(n, c)| ChannelInfo {
            name: n.into(),
            group: "p".into(),
            class: c,
            width_bytes: 16,
        })
        .collect()
    }

    fn idle() -> Vec<ChannelSample> {
        vec![ChannelSample::default(); 5]
    }

    fn fire(s: &mut [ChannelSample], i: usize, beat: Beat) {
        s[i] = ChannelSample { valid: true, ready: true, payload: Some(beat) };
    }

    #[test]
    fn short_burst_flags_count_and_last() {
        let mut cycles = Vec::new();
        let mut c = idle();
        fire(&mut c, 2, Beat::Addr(AddrBeat::incr(0, 0x1000, 4, 4)));
        cycles.push(c);
        for k in 0..3 {
            let mut c = idle();
            fire(&mut c, 3, Beat::Data(DataBeat::write(vec![k; 16], k == 2)));
            cycles.push(c);
        }
        let trace = ChannelTrace { channels: port_channels(), cycles };
        let v = check_trace(&trace);
        let rules: Vec<Rule> = v.iter().map(|v| v.rule).collect();
        assert_eq!(rules, vec![Rule::Last, Rule::BeatCount]);
        assert!(v.iter().all(|v| v.cycle == 3));
    }

    #[test]
    fn retracted_valid_is_flagged_once() {
        let beat = Beat::Data(DataBeat::read(0, vec![1; 16], true));
        let mut cycles = Vec::new();
        let mut c = idle();
        fire(&mut c, 0, Beat::Addr(AddrBeat::incr(0, 0, 1, 4)));
        cycles.push(c);
        let mut c = idle();
        c[1] = ChannelSample { valid: true, ready: false, payload: Some(beat.clone()) };
        cycles.push(c);
        cycles.push(idle());
        let mut c = idle();
        fire(&mut c, 1, beat);
        cycles.push(c);
        let v = check_trace(&ChannelTrace { channels: port_channels(), cycles });
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::ValidStability);
        assert_eq!(v[0].cycle, 2);
    }

    #[test]
    fn extra_write_response_is_flagged() {
        let mut c = idle();
        fire(&mut c, 4, Beat::Resp(RespBeat { id: 0, resp: Resp::Okay }));
        let v = check_trace(&ChannelTrace { channels: port_channels(), cycles: vec![c] });
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::OneResponse);
    }

    #[test]
    fn write_data_before_address_is_legal() {
        let mut cycles = Vec::new();
        let mut c = idle();
        fire(&mut c, 3, Beat::Data(DataBeat::write(vec![0; 16], true)));
        cycles.push(c);
        let mut c = idle();
        fire(&mut c, 2, Beat::Addr(AddrBeat::incr(0, 0x40, 1, 4)));
        cycles.push(c);
        let mut c = idle();
        fire(&mut c, 4, Beat::Resp(RespBeat { id: 0, resp: Resp::Okay }));
        cycles.push(c);
        assert!(check_trace(&ChannelTrace { channels: port_channels(), cycles }).is_empty());
    }

    #[test]
    fn four_k_crossing_is_flagged_at_issue() {
        let mut c = idle();
        fire(&mut c, 0, Beat::Addr(AddrBeat::incr(0, 0x0FF0, 2, 4)));
        let v = check_trace(&ChannelTrace { channels: port_channels(), cycles: vec![c] });
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::Boundary4K);
    }
}
