//! Seeded, counter-addressable random streams.
//!
//! Every random draw in the crate is a pure function of a `(seed, stream, counter)`
//! key. Trajectory `i` of a simulation reads stream `i`, and step `k` reads the
//! block at counter `k`, so neither the batch size nor the thread schedule can
//! change an individual path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Each counter owns a window of 2^24 32-bit words of keystream.
const COUNTER_SHIFT: u32 = 24;

/// Gaussian noise addressed by `(seed, stream, counter)`.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    base: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(stream);
        Self { base }
    }

    /// Generator positioned at the start of the window for `counter`.
    pub fn at(&self, counter: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_word_pos(u128::from(counter) << COUNTER_SHIFT);
        rng
    }

    /// Fill `out` with i.i.d. standard normals drawn from the window for `counter`.
    pub fn fill_normals(&self, counter: u64, out: &mut [f64]) {
        let mut rng = self.at(counter);
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }
}

/// SplitMix64 finalizer; used to derive independent child seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(seed, index)`. Distinct indices give unrelated seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Child seed for a path of indices, e.g. `(trial, n, tau)`.
pub fn derive_seed_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &i| derive_seed(s, i))
}

/// A plain sequential generator for `seed`.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
