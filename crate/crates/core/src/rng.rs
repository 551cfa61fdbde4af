//! Seeded random substreams.
//!
//! One 64-bit root seed drives everything. Each consumer (initialisation,
//! per-epoch shuffling, per-layer reinforcement) gets its own stream whose
//! seed is a SplitMix64 fold of the root and a tag tuple, so the value a
//! consumer sees never depends on which other streams were drawn first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PrngStream = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Init,
    Shuffle { epoch: u32 },
    Reinforce { layer: u32, epoch: u32, batch: u32 },
}

impl Purpose {
    fn words(self) -> [u64; 4] {
        match self {
            Purpose::Init => [1, 0, 0, 0],
            Purpose::Shuffle { epoch } => [2, epoch as u64, 0, 0],
            Purpose::Reinforce { layer, epoch, batch } => [3, layer as u64, epoch as u64, batch as u64],
        }
    }
}

pub fn derive_seed(root: u64, purpose: Purpose) -> u64 {
    purpose.words().iter().fold(splitmix64(root), |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

pub fn stream(root: u64, purpose: Purpose) -> PrngStream {
    PrngStream::seed_from_u64(derive_seed(root, purpose))
}
