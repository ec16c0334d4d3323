//! Portable keyed random streams.
//!
//! Every random decision in the harness is drawn from a stream identified by
//! a 64-bit seed plus a byte key (sample id, pair id, entity, ...). Streams
//! use the SplitMix64 output function over a Weyl counter:
//!
//! ```text
//! key_hash = FNV-1a-64(key parts joined with 0xFF)
//! state_0  = mix(seed XOR key_hash)
//! state_n  = state_0 + n * 0x9E3779B97F4A7C15        (wrapping)
//! output_n = mix(state_n)
//! mix(z)   : z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!            z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31
//! ```
//!
//! Uniform floats take the top 53 bits (`(output >> 11) * 2^-53`), and
//! bounded integers use the multiply-shift map `(output * n) >> 64`. Because
//! a draw depends only on `(seed, key, n)`, results do not depend on the
//! order in which samples are processed.

use serde::{Deserialize, Serialize};

/// Identifies the generator in run manifests.
pub const GENERATOR_NAME: &str = "splitmix64-keyed-fnv1a-v1";

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the key parts, with `0xFF` between parts.
pub fn key_hash(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h ^= 0xFF;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

#[derive(Debug, Clone)]
pub struct KeyedRng {
    state: u64,
}

impl KeyedRng {
    pub fn new(seed: Seed, parts: &[&[u8]]) -> Self {
        KeyedRng {
            state: mix(seed.0 ^ key_hash(parts)),
        }
    }

    pub fn from_str_key(seed: Seed, parts: &[&str]) -> Self {
        let mut bytes: [&[u8]; 8] = [&[]; 8];
        assert!(parts.len() <= bytes.len(), "at most 8 key parts");
        for (slot, p) in bytes.iter_mut().zip(parts) {
            *slot = p.as_bytes();
        }
        Self::new(seed, &bytes[..parts.len()])
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}
