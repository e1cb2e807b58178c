//! Seeded pseudo-random number generation.
//!
//! Every stochastic routine takes an explicit `u64` seed. The generator is
//! xoshiro256++ whose 256-bit state is expanded from the seed with splitmix64
//! (`SeedableRng::seed_from_u64`). Both algorithms are fully specified by
//! integer arithmetic, so streams are identical across platforms.
//!
//! Independent sub-streams are obtained with [`derive_seed`], which mixes a
//! parent seed with a textual label through splitmix64 finalisation.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type GaRng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> GaRng {
    GaRng::seed_from_u64(seed)
}

/// splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a label (FNV-1a hashed).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}
