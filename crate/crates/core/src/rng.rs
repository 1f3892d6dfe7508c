//! Counter-keyed random streams.
//!
//! A stream is identified by a key derived from the experiment seed and a
//! path of integer labels (draw index, cell index, replica, ...). The n-th
//! output of a stream is `mix(key + n * GOLDEN)`, i.e. SplitMix64 run from a
//! per-stream starting point. Two streams with different paths are
//! decorrelated through the finalizer, and no stream ever depends on how
//! many values another stream consumed, which is what makes parallel
//! reductions reproducible.

use rand_core::{impls, Error as RandError, RngCore};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stream labels used across the crate.
pub mod tag {
    pub const NODES: u64 = 0x4e4f_4445;
    pub const OUTER_Y: u64 = 0x4f55_5459;
    pub const INNER: u64 = 0x494e_4e52;
    pub const GAMMA: u64 = 0x4741_4d41;
    pub const DELTA: u64 = 0x4445_4c54;
    pub const PROBE: u64 = 0x5052_4f42;
    pub const VERIFY: u64 = 0x5645_5246;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const CHECK: u64 = 0x4348_4543;
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix(seed ^ 0x5851_f42d_4c95_7f2d),
            counter: 0,
        }
    }

    /// Stream keyed by `seed` followed by every label in `path`.
    pub fn keyed(seed: u64, path: &[u64]) -> Self {
        path.iter().fold(Self::new(seed), |s, &label| s.child(label))
    }

    /// Independent child stream; does not advance `self`.
    pub fn child(&self, label: u64) -> Self {
        Self {
            key: mix(self.key ^ mix(label.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_raw(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_raw() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_raw() as u128 * n as u128) >> 64) as usize
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_raw() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_raw()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.fill_bytes(dest);
        Ok(())
    }
}
