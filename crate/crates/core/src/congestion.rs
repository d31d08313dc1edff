// SPDX-License-Identifier: Apache-2.0

//! Seeded backpressure injection for bridge-side handshake signals.
//!
//! The emulator never touches a payload. On request channels (AR, AW, W) it
//! withholds the bridge's READY, which AXI lets a subordinate toggle freely
//! before a handshake. On response channels (R, B) it delays the moment the
//! bridge first raises VALID; once raised, VALID is held until the handshake.
//!
//! Each (port, channel) pair owns an independent SplitMix64 stream seeded as
//!
//! ```text
//! s0 = mix64(mix64(seed ^ fnv1a64(port_name)) ^ (channel_ordinal + 1))
//! ```
//!
//! so adding or removing a port never perturbs another port's draws.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signals::ChannelClass;

#[derive(Debug, Error, PartialEq)]
pub enum CongestionError {
    #[error("{channel}: stall probability {prob} outside [0, 1]")]
    Probability { channel: &'static str, prob: f64 },
    #[error("{channel}: valid delay bounds [{min}, {max}] are inverted")]
    DelayBounds { channel: &'static str, min: u32, max: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelCongestion {
    pub ready_stall_prob: f64,
    pub valid_delay_min: u32,
    pub valid_delay_max: u32,
}

impl Default for ChannelCongestion {
    fn default() -> Self {
        Self::NONE
    }
}

impl ChannelCongestion {
    pub const NONE: Self = Self {
        ready_stall_prob: 0.0,
        valid_delay_min: 0,
        valid_delay_max: 0,
    };

    pub fn new(ready_stall_prob: f64, valid_delay_min: u32, valid_delay_max: u32) -> Self {
        Self { ready_stall_prob, valid_delay_min, valid_delay_max }
    }

    fn validate(&self, channel: &'static str) -> Result<(), CongestionError> {
        if !(0.0..=1.0).contains(&self.ready_stall_prob) {
            return Err(CongestionError::Probability { channel, prob: self.ready_stall_prob });
        }
        if self.valid_delay_min > self.valid_delay_max {
            return Err(CongestionError::DelayBounds {
                channel,
                min: self.valid_delay_min,
                max: self.valid_delay_max,
            });
        }
        Ok(())
    }
}

/// Per-channel-class stall probabilities and delay bounds plus a seed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CongestionProfile {
    pub ar: ChannelCongestion,
    pub r: ChannelCongestion,
    pub aw: ChannelCongestion,
    pub w: ChannelCongestion,
    pub b: ChannelCongestion,
    pub seed: u64,
}

impl CongestionProfile {
    pub fn none() -> Self {
        Self::default()
    }

    /// Same settings on all five channel classes.
    pub fn uniform(c: ChannelCongestion, seed: u64) -> Self {
        Self { ar: c, r: c, aw: c, w: c, b: c, seed }
    }

    pub fn channel(&self, class: ChannelClass) -> &ChannelCongestion {
        match class {
            ChannelClass::Ar => &self.ar,
            ChannelClass::R => &self.r,
            ChannelClass::Aw => &self.aw,
            ChannelClass::W => &self.w,
            ChannelClass::B | ChannelClass::Stream => &self.b,
        }
    }

    pub fn validate(&self) -> Result<(), CongestionError> {
        self.ar.validate("ar")?;
        self.r.validate("r")?;
        self.aw.validate("aw")?;
        self.w.validate("w")?;
        self.b.validate("b")
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u32, hi: u32) -> u32 {
        let span = (hi - lo) as u64 + 1;
        lo + ((self.next_u64() as u128 * span as u128) >> 64) as u32
    }
}

/// PRNG stream of one (port, channel) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamState {
    rng: SplitMix64,
}

impl StreamState {
    pub fn new(seed: u64, port: &str, channel: ChannelClass) -> Self {
        let s = mix64(mix64(seed ^ fnv1a64(port.as_bytes())) ^ (channel.ordinal() + 1));
        Self { rng: SplitMix64::new(s) }
    }

    /// One Bernoulli draw: false (stall) with probability `ready_stall_prob`.
    pub fn gate_ready(&mut self, c: &ChannelCongestion) -> bool {
        let u = self.rng.next_f64();
        u >= c.ready_stall_prob
    }

    /// Cycles to withhold VALID before presenting a new payload.
    pub fn draw_valid_delay(&mut self, c: &ChannelCongestion) -> u32 {
        self.rng.range_inclusive(c.valid_delay_min, c.valid_delay_max)
    }
}

/// The five streams of one manager port.
#[derive(Debug, Clone)]
pub struct PortStreams {
    pub ar: StreamState,
    pub r: StreamState,
    pub aw: StreamState,
    pub w: StreamState,
    pub b: StreamState,
}

impl PortStreams {
    pub fn new(seed: u64, port: &str) -> Self {
        Self {
            ar: StreamState::new(seed, port, ChannelClass::Ar),
            r: StreamState::new(seed, port, ChannelClass::R),
            aw: StreamState::new(seed, port, ChannelClass::Aw),
            w: StreamState::new(seed, port, ChannelClass::W),
            b: StreamState::new(seed, port, ChannelClass::B),
        }
    }
}
