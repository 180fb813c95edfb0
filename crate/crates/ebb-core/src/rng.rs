//! Deterministic 64-bit PRNG used for every seeded operation.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood's mix function as
//! published in Vigna's reference implementation): state advances by the
//! golden-ratio increment 0x9E3779B97F4A7C15 and each output is the
//! finalizer
//!
//! ```text
//! z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//! z ^= z >> 27; z *= 0x94D049BB133111EB;
//! z ^= z >> 31;
//! ```
//!
//! Fixing the algorithm here (rather than behind a library type) keeps
//! every sampled artifact replayable from (inputs, seed) alone, in any
//! language.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in [0, n). Uses the modulo reduction; the bias is below
    /// 2^-50 for every n used here and the draw sequence stays trivially
    /// replayable.
    #[inline]
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle, back-to-front, one draw per position.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Seed for one derived stream: the master seed is mixed once, then each
/// component is xor-ed in and remixed. Components are (grid index,
/// replicate index, retry attempt) for bootstrap training.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut s = mix(master);
    for &p in parts {
        s = mix(s ^ p);
    }
    s
}
