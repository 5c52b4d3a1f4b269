//! Named random streams derived from one run seed.
//!
//! Every subsystem draws from its own stream so that changing how many numbers
//! one subsystem consumes never perturbs another. Streams are addressed by a
//! domain label and a path of integer indices (round, device, ...).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to mix seeds and stream indices.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Identifier of one deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    /// Root stream for `domain` under the run `seed`.
    pub fn new(seed: u64, domain: &str) -> Self {
        StreamKey(splitmix64(splitmix64(seed) ^ fnv1a(domain)))
    }

    /// Child stream addressed by `index`.
    pub fn child(self, index: u64) -> Self {
        StreamKey(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Raw 64-bit key.
    pub fn raw(self) -> u64 {
        self.0
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
