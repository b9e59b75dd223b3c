//! Per-node random streams: a counter-based mixer (default) and the 32-bit
//! Fibonacci LFSR used by hardware p-bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of node `node`'s stream under global seed `seed`.
#[inline]
pub fn node_seed(seed: u64, node: usize) -> u64 {
    mix64(seed ^ mix64(node as u64 ^ 0xA076_1D64_78BD_642F))
}

/// Fibonacci LFSR with feedback polynomial `x^32 + x^22 + x^2 + x + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lfsr32 {
    state: u32,
}

impl Lfsr32 {
    pub fn new(state: u32) -> Result<Self> {
        if state == 0 {
            Err(Error::ZeroLfsrState)
        } else {
            Ok(Lfsr32 { state })
        }
    }

    /// A nonzero state derived from a 64-bit seed.
    pub fn from_seed(seed: u64) -> Self {
        let mut z = seed;
        loop {
            z = mix64(z);
            let state = (z >> 32) as u32;
            if state != 0 {
                return Lfsr32 { state };
            }
        }
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// Advances one step. Taps 32, 22, 2, 1 are bits 31, 21, 1, 0.
    #[inline]
    pub fn step(&mut self) -> u32 {
        let s = self.state;
        let bit = (s >> 31) ^ (s >> 21) ^ (s >> 1) ^ s;
        self.state = (s << 1) | (bit & 1);
        self.state
    }

    /// Next uniform in `[0, 1)` as `state / 2^32`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        self.step() as f64 / 4_294_967_296.0
    }
}

/// Which generator backs each node's stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RngKind {
    #[default]
    CounterBased,
    Lfsr32,
}

impl std::str::FromStr for RngKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counter" | "counter_based" | "counter-based" => Ok(RngKind::CounterBased),
            "lfsr" | "lfsr32" => Ok(RngKind::Lfsr32),
            _ => Err(Error::InvalidArgument(format!("unknown rng `{s}`"))),
        }
    }
}

/// One independent stream per node, so updates can run in any order or in
/// parallel and still reproduce the same trajectory.
#[derive(Debug, Clone)]
pub enum NodeStreams {
    Counter { keys: Vec<u64>, counters: Vec<u64> },
    Lfsr(Vec<Lfsr32>),
}

impl NodeStreams {
    pub fn new(kind: RngKind, seed: u64, n: usize) -> Self {
        match kind {
            RngKind::CounterBased => NodeStreams::Counter {
                keys: (0..n).map(|i| node_seed(seed, i)).collect(),
                counters: vec![0; n],
            },
            RngKind::Lfsr32 => {
                NodeStreams::Lfsr((0..n).map(|i| Lfsr32::from_seed(node_seed(seed, i))).collect())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NodeStreams::Counter { keys, .. } => keys.len(),
            NodeStreams::Lfsr(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Next uniform in `[0, 1)` from node `i`'s stream.
    #[inline]
    pub fn uniform(&mut self, i: usize) -> f64 {
        match self {
            NodeStreams::Counter { keys, counters } => {
                let c = counters[i];
                counters[i] = c + 1;
                let bits = mix64(keys[i].wrapping_add(c.wrapping_mul(0xD1B5_4A32_D192_ED03)));
                (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
            }
            NodeStreams::Lfsr(v) => v[i].next_uniform(),
        }
    }

    /// Next uniform on `(-1, 1)` for the p-bit comparison.
    #[inline]
    pub fn signed(&mut self, i: usize) -> f64 {
        2.0 * self.uniform(i) - 1.0
    }

    /// Splits the streams of the given disjoint index ranges into handles
    /// that can be used from different threads.
    pub(crate) fn handle(&mut self) -> StreamHandle<'_> {
        match self {
            NodeStreams::Counter { keys, counters } => StreamHandle::Counter {
                keys,
                counters: counters.as_mut_ptr(),
            },
            NodeStreams::Lfsr(v) => StreamHandle::Lfsr(v.as_mut_ptr()),
        }
    }
}

/// Shared view of [`NodeStreams`] for tile-parallel sweeps. Each node's
/// stream must be touched by one thread at a time; the sampler guarantees
/// this by giving every node to exactly one tile.
pub(crate) enum StreamHandle<'a> {
    Counter { keys: &'a [u64], counters: *mut u64 },
    Lfsr(*mut Lfsr32),
}

unsafe impl Send for StreamHandle<'_> {}
unsafe impl Sync for StreamHandle<'_> {}

impl StreamHandle<'_> {
    /// # Safety
    /// No other thread may use node `i`'s stream concurrently, and `i` must
    /// be in range.
    #[inline]
    pub(crate) unsafe fn signed(&self, i: usize) -> f64 {
        let u = match self {
            StreamHandle::Counter { keys, counters } => {
                let slot = counters.add(i);
                let c = *slot;
                *slot = c + 1;
                let bits = mix64(keys[i].wrapping_add(c.wrapping_mul(0xD1B5_4A32_D192_ED03)));
                (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
            }
            StreamHandle::Lfsr(ptr) => (*ptr.add(i)).next_uniform(),
        };
        2.0 * u - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 16-bit Fibonacci LFSR with the maximal taps 16, 15, 13, 4.
    fn lfsr16_period(seed: u16) -> u32 {
        let mut s = seed;
        let mut steps = 0;
        loop {
            let bit = (s >> 15) ^ (s >> 14) ^ (s >> 12) ^ (s >> 3);
            s = (s << 1) | (bit & 1);
            steps += 1;
            if s == seed {
                return steps;
            }
        }
    }

    #[test]
    fn sixteen_bit_analog_is_maximal() {
        assert_eq!(lfsr16_period(1), 65535);
        assert_eq!(lfsr16_period(0xACE1), 65535);
    }

    /// Companion matrix of one LFSR step over GF(2), as 32 column bitmasks.
    fn step_matrix() -> [u32; 32] {
        let mut cols = [0u32; 32];
        for (b, col) in cols.iter_mut().enumerate() {
            let mut l = Lfsr32 { state: 1 << b };
            l.step();
            *col = l.state;
        }
        cols
    }

    fn apply(m: &[u32; 32], v: u32) -> u32 {
        (0..32).filter(|&b| v >> b & 1 == 1).fold(0, |acc, b| acc ^ m[b])
    }

    fn mul(a: &[u32; 32], b: &[u32; 32]) -> [u32; 32] {
        let mut out = [0u32; 32];
        for (k, col) in out.iter_mut().enumerate() {
            *col = apply(a, b[k]);
        }
        out
    }

    fn pow(m: &[u32; 32], mut e: u64) -> [u32; 32] {
        let mut result = [0u32; 32];
        for (b, col) in result.iter_mut().enumerate() {
            *col = 1 << b;
        }
        let mut base = *m;
        while e > 0 {
            if e & 1 == 1 {
                result = mul(&base, &result);
            }
            base = mul(&base, &base);
            e >>= 1;
        }
        result
    }

    fn is_identity(m: &[u32; 32]) -> bool {
        m.iter().enumerate().all(|(b, &col)| col == 1 << b)
    }

    #[test]
    fn thirty_two_bit_period_is_maximal() {
        // The step matrix has order exactly 2^32 - 1 iff M^(2^32-1) = I and
        // M^((2^32-1)/p) != I for each prime p | 2^32 - 1.
        let m = step_matrix();
        let full = (1u64 << 32) - 1;
        assert!(is_identity(&pow(&m, full)));
        for p in [3u64, 5, 17, 257, 65537] {
            assert!(!is_identity(&pow(&m, full / p)), "p = {p}");
        }
    }

    #[test]
    fn cycle_spot_check() {
        let seed = 0xDEAD_BEEF;
        let mut l = Lfsr32::new(seed).unwrap();
        let jump = pow(&step_matrix(), (1u64 << 32) - 1 - 1000);
        let mut s = apply(&jump, seed);
        for _ in 0..1000 {
            let mut t = Lfsr32 { state: s };
            t.step();
            s = t.state;
        }
        assert_eq!(s, seed);
        for _ in 0..1000 {
            assert_ne!(l.step(), 0);
        }
    }

    #[test]
    fn zero_seed_rejected() {
        assert!(matches!(Lfsr32::new(0), Err(Error::ZeroLfsrState)));
    }

    #[test]
    fn lfsr_mean_is_half() {
        let mut l = Lfsr32::new(12345).unwrap();
        let n = 1_000_000;
        let mean = (0..n).map(|_| l.next_uniform()).sum::<f64>() / n as f64;
        let sigma = (1.0 / 12.0 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn counter_streams_are_reproducible_and_uniform() {
        let mut a = NodeStreams::new(RngKind::CounterBased, 9, 4);
        let mut b = NodeStreams::new(RngKind::CounterBased, 9, 4);
        for _ in 0..100 {
            assert_eq!(a.uniform(2), b.uniform(2));
        }
        let n = 200_000;
        let mean = (0..n).map(|_| a.uniform(1)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * (1.0 / 12.0 / n as f64).sqrt());
    }
}
