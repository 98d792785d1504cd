//! Seeded pseudo-random streams.
//!
//! Every stochastic component of the library draws from [`SplitMix64`]
//! (Steele, Lea & Flood 2014), a 64-bit splittable generator with a one-word
//! state and an invertible output mix. Substreams are derived from a
//! `(seed, stream)` pair, so independent trajectories, replicas and target
//! draws are reproducible regardless of scheduling: the same pair always
//! yields the same sequence, bit for bit.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 generator. State advances by the golden-ratio increment and is
/// finalized with the Stafford "mix13" permutation.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    /// Stream 0 of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::from_seed_stream(seed, 0)
    }

    /// Substream `stream` of `seed`. The stream id is mixed through the
    /// output permutation before being combined with the seed, so nearby
    /// stream ids give unrelated sequences.
    pub fn from_seed_stream(seed: u64, stream: u64) -> Self {
        let salt = mix13(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
        SplitMix64 {
            state: seed ^ salt,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix13(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

#[inline]
fn mix13(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
