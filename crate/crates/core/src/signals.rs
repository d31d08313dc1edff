// SPDX-License-Identifier: Apache-2.0

//! Two-phase valid/ready channel store.
//!
//! Every channel carries a producer-driven `valid` + payload and a
//! consumer-driven `ready`. During a cycle processes read only the committed
//! values; anything they drive lands in a shadow slot that becomes visible at
//! the next cycle boundary. Undriven fields hold their previous value.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::axi::{AddrBeat, DataBeat, RespBeat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId(pub(crate) u32);

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelClass {
    Ar,
    R,
    Aw,
    W,
    B,
    Stream,
}

impl ChannelClass {
    pub fn ordinal(self) -> u64 {
        self as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelClass::Ar => "AR",
            ChannelClass::R => "R",
            ChannelClass::Aw => "AW",
            ChannelClass::W => "W",
            ChannelClass::B => "B",
            ChannelClass::Stream => "STREAM",
        }
    }
}

impl fmt::Display for ChannelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stream (AXI-Stream style) payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamBeat {
    pub data: Vec<u8>,
    pub last: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Beat {
    Addr(AddrBeat),
    Data(DataBeat),
    Resp(RespBeat),
    Stream(StreamBeat),
}

impl Beat {
    pub fn as_addr(&self) -> Option<&AddrBeat> {
        match self {
            Beat::Addr(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_data(&self) -> Option<&DataBeat> {
        match self {
            Beat::Data(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_resp(&self) -> Option<&RespBeat> {
        match self {
            Beat::Resp(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_stream(&self) -> Option<&StreamBeat> {
        match self {
            Beat::Stream(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelInfo {
    /// Hierarchical name, `<group>.<channel>`.
    pub name: String,
    /// Owning port (AXI bundle) or stream link name.
    pub group: String,
    pub class: ChannelClass,
    /// Data width in bytes (bus width for AXI, lane width for streams).
    pub width_bytes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelSample {
    pub valid: bool,
    pub ready: bool,
    pub payload: Option<Beat>,
}

impl ChannelSample {
    pub fn fired(&self) -> bool {
        self.valid && self.ready
    }

    pub fn stalled(&self) -> bool {
        self.valid && !self.ready
    }
}

/// Per-cycle committed samples of every channel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelTrace {
    pub channels: Vec<ChannelInfo>,
    /// `cycles[t][c]` is channel `c` as sampled at cycle `t`.
    pub cycles: Vec<Vec<ChannelSample>>,
}

impl ChannelTrace {
    /// Total handshakes recorded on `channel`.
    pub fn handshakes(&self, channel: usize) -> usize {
        self.cycles.iter().filter(|c| c[channel].fired()).count()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }
}

/// The five channels of one AXI4 manager port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxiChannels {
    pub ar: ChannelId,
    pub r: ChannelId,
    pub aw: ChannelId,
    pub w: ChannelId,
    pub b: ChannelId,
}

impl AxiChannels {
    pub fn all(&self) -> [(ChannelClass, ChannelId); 5] {
        [
            (ChannelClass::Ar, self.ar),
            (ChannelClass::R, self.r),
            (ChannelClass::Aw, self.aw),
            (ChannelClass::W, self.w),
            (ChannelClass::B, self.b),
        ]
    }
}

#[derive(Debug, Default)]
pub struct Signals {
    info: Vec<ChannelInfo>,
    cur: Vec<ChannelSample>,
    next_fwd: Vec<Option<Option<Beat>>>,
    next_ready: Vec<Option<bool>>,
}

impl Signals {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_channel(&mut self, group: &str, class: ChannelClass, width_bytes: usize) -> ChannelId {
        let suffix = match class {
            ChannelClass::Stream => "tdata".to_string(),
            c => c.name().to_ascii_lowercase(),
        };
        let id = ChannelId(self.info.len() as u32);
        self.info.push(ChannelInfo {
            name: format!("{group}.{suffix}"),
            group: group.to_string(),
            class,
            width_bytes,
        });
        self.cur.push(ChannelSample::default());
        self.next_fwd.push(None);
        self.next_ready.push(None);
        id
    }

    pub fn axi_port(&mut self, name: &str, bus_bytes: usize) -> AxiChannels {
        AxiChannels {
            ar: self.add_channel(name, ChannelClass::Ar, bus_bytes),
            r: self.add_channel(name, ChannelClass::R, bus_bytes),
            aw: self.add_channel(name, ChannelClass::Aw, bus_bytes),
            w: self.add_channel(name, ChannelClass::W, bus_bytes),
            b: self.add_channel(name, ChannelClass::B, bus_bytes),
        }
    }

    pub fn stream(&mut self, name: &str, width_bytes: usize) -> ChannelId {
        self.add_channel(name, ChannelClass::Stream, width_bytes)
    }

    pub fn info(&self) -> &[ChannelInfo] {
        &self.info
    }

    pub fn len(&self) -> usize {
        self.info.len()
    }

    pub fn is_empty(&self) -> bool {
        self.info.is_empty()
    }

    pub fn current(&self) -> &[ChannelSample] {
        &self.cur
    }

    pub fn sample(&self, ch: ChannelId) -> &ChannelSample {
        &self.cur[ch.index()]
    }

    /// Drives `valid` (Some) or deasserts it (None) for the next cycle.
    ///
    /// Panics if the same channel's forward path is driven twice in one
    /// cycle: that is a modelling error (two drivers on one net).
    pub fn drive(&mut self, ch: ChannelId, beat: Option<Beat>) {
        let slot = &mut self.next_fwd[ch.index()];
        assert!(slot.is_none(), "channel {} forward path driven twice in one cycle", self.info[ch.index()].name);
        *slot = Some(beat);
    }

    pub fn drive_ready(&mut self, ch: ChannelId, ready: bool) {
        let slot = &mut self.next_ready[ch.index()];
        assert!(slot.is_none(), "channel {} ready driven twice in one cycle", self.info[ch.index()].name);
        *slot = Some(ready);
    }

    /// Makes every driven value visible; undriven fields hold.
    pub fn commit(&mut self) -> bool {
        let mut changed = false;
        for (i, cur) in self.cur.iter_mut().enumerate() {
            if let Some(beat) = self.next_fwd[i].take() {
                let valid = beat.is_some();
                if cur.valid != valid || cur.payload != beat {
                    cur.valid = valid;
                    cur.payload = beat;
                    changed = true;
                }
            }
            if let Some(r) = self.next_ready[i].take() {
                changed |= cur.ready != r;
                cur.ready = r;
            }
        }
        changed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn driven_values_appear_after_commit() {
        let mut s = Signals::new();
        let ch = s.stream("link", 16);
        let beat = Beat::Stream(StreamBeat { data: vec![1; 16], last: true });
        s.drive(ch, Some(beat.clone()));
        s.drive_ready(ch, true);
        assert!(!s.sample(ch).valid);
        s.commit();
        assert!(s.sample(ch).fired());
        assert_eq!(s.sample(ch).payload.as_ref(), Some(&beat));
        // holds without a driver
        s.commit();
        assert!(s.sample(ch).fired());
    }

    #[test]
    #[should_panic(expected = "driven twice")]
    fn double_drive_panics() {
        let mut s = Signals::new();
        let ch = s.stream("link", 16);
        s.drive(ch, None);
        s.drive(ch, None);
    }

    #[test]
    fn axi_port_names() {
        let mut s = Signals::new();
        let p = s.axi_port("weights", 16);
        assert_eq!(s.info()[p.w.index()].name, "weights.w");
        assert_eq!(s.info()[p.ar.index()].class, ChannelClass::Ar);
    }
}
