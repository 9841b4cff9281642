//! Splittable deterministic random streams.
//!
//! The generator is SplitMix64: `state += 0x9E3779B97F4A7C15` per draw, with
//! the output passed through the murmur-style finalizer. It is tiny, has no
//! platform-dependent behavior, and its output sequence is frozen forever,
//! which is what the reproducibility guarantees of this crate rest on.
//!
//! Streams are split by *label* rather than by draw position: a child stream
//! is keyed on the parent's origin seed and the label, so
//! `root.split("policy")` yields the same stream no matter how many draws the
//! parent has made. Use distinct labels for distinct purposes.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// A deterministic random stream with stable label-based splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    origin: u64,
    state: u64,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        RngStream { origin: seed, state: seed }
    }

    /// The seed this stream was created from. Splits key off this value,
    /// not off the mutable counter state.
    pub fn origin(&self) -> u64 {
        self.origin
    }

    /// Child stream keyed by `(origin, label)`. Independent of draw position.
    pub fn split(&self, label: &str) -> Self {
        Self::from_seed(mix64(self.origin ^ fnv1a(label.as_bytes())))
    }

    /// Child stream keyed by `(origin, label, index)`.
    pub fn split_indexed(&self, label: &str, index: u64) -> Self {
        Self::from_seed(mix64(
            self.origin ^ fnv1a(label.as_bytes()) ^ mix64(index.wrapping_add(GOLDEN_GAMMA)),
        ))
    }

    /// Sequential child: consumes one draw from this stream to seed a new one.
    pub fn fork(&mut self) -> Self {
        Self::from_seed(self.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)` via 128-bit widening multiply.
    /// The modulo bias is below 2^-64 and irrelevant at our sample counts.
    pub fn range(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Bernoulli draw; `p <= 0` never fires, `p >= 1` always fires.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.range(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}
