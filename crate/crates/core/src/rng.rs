//! Seeded, splittable random streams.
//!
//! Every random draw in the crate comes from a [`RandomSeed`]: a 64-bit seed
//! plus a stream index fed to a ChaCha8 generator. Bootstrap replicate `i`
//! uses stream `i`, so results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSeed {
    pub seed: u64,
    pub stream: u64,
}

// Labels for derived families of streams.
pub(crate) const OMEGA: u64 = 0x6f6d_6567_61;
pub(crate) const TRAIN: u64 = 0x7472_6169_6e;
pub(crate) const BOOT: u64 = 0x626f_6f74;

impl RandomSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Same seed, different stream.
    pub fn stream(&self, stream: u64) -> Self {
        Self { seed: self.seed, stream }
    }

    /// An independent family of streams keyed by `label`.
    pub fn derive(&self, label: u64) -> Self {
        let mut h = splitmix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        h = splitmix64(h ^ self.stream);
        h = splitmix64(h ^ label);
        Self { seed: h, stream: 0 }
    }

    pub fn rng(&self) -> Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// One `N(0, 1)` draw.
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
