//! Seed plumbing. Every random stream in the crate is a ChaCha8 generator
//! seeded from a named seed mixed with a task identifier, so results never
//! depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed for `task` from `seed`.
pub fn derive_seed(seed: u64, task: u64) -> u64 {
    splitmix64(seed ^ splitmix64(task.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn task_rng(seed: u64, task: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(seed, task))
}
