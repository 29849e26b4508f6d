//! Derived random streams.
//!
//! Every random draw in the crate comes from a [`StreamKey`] derived from a
//! user seed plus a path of tags (trial index, user index, purpose, ...).
//! Two runs that derive the same path see the same numbers no matter how
//! the work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Concrete generator used everywhere.
pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

/// Tags used below a trial key.
pub mod tags {
    pub const SYMBOLS: u64 = 0x5359_4d42;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const USER_BASE: u64 = 0x5553_0000_0000;
    pub const RETRY: u64 = 0x5245_5452;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(splitmix64(seed))
    }

    pub fn child(self, tag: u64) -> Self {
        StreamKey(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x632b_e59b_d9b4_e019))))
    }

    pub fn user(self, user: usize) -> Self {
        self.child(tags::USER_BASE + user as u64)
    }

    pub fn rng(self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut x = self.0;
        for chunk in seed.chunks_exact_mut(8) {
            x = splitmix64(x);
            chunk.copy_from_slice(&x.to_le_bytes());
        }
        StreamRng::from_seed(seed)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}
