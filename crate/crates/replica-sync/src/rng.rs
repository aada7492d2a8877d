//! Seed partitioning. Every Monte Carlo sample owns a stream derived from
//! `(seed, index)`, so results do not depend on how work is split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent uses of one seed apart.
pub mod tag {
    pub const OUTER: u64 = 0x6f75_7465_7200_0001;
    pub const INNER: u64 = 0x696e_6e65_7200_0002;
    pub const STARTS: u64 = 0x7374_6172_7400_0003;
    pub const SIGNAL: u64 = 0x7369_676e_616c_0004;
    pub const NOISE: u64 = 0x6e6f_6973_6500_0005;
    pub const CHAIN: u64 = 0x6368_6169_6e00_0006;
    pub const CLASSIFY: u64 = 0x636c_6173_7300_0007;
}

/// splitmix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}

/// Independent generator for sample `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}
