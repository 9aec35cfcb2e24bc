//! Reproducible random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by a
//! [`StreamKey`] plus a 64-bit stream id. Keys are derived hierarchically
//! (experiment seed, then cell, repetition, level, ...) so that results do not
//! depend on execution order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Source of standard normal draws driving the Euler recursions.
pub trait Noise {
    fn standard_normal(&mut self) -> f64;
}

impl<R: Rng + ?Sized> Noise for R {
    #[inline]
    fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

/// Noise source that always returns zero. Turns every simulator into its
/// deterministic drift-only skeleton.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl Noise for ZeroNoise {
    #[inline]
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 256-bit key identifying a family of independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey([u64; 4]);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        let mut words = [0u64; 4];
        let mut z = seed;
        for w in &mut words {
            z = splitmix64(z);
            *w = z;
        }
        StreamKey(words)
    }

    /// Child key for a sub-task (a repetition, a level, a sweep cell).
    pub fn derive(&self, tag: u64) -> Self {
        let mut words = self.0;
        let salt = splitmix64(tag ^ 0xA076_1D64_78BD_642F);
        for (i, w) in words.iter_mut().enumerate() {
            *w = splitmix64(*w ^ salt.rotate_left(16 * i as u32));
        }
        StreamKey(words)
    }

    /// Independent generator number `stream` under this key.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(self.0) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng
    }
}

/// Stream id reserved for resampling decisions of a particle system.
pub(crate) const RESAMPLE_STREAM: u64 = u64::MAX;
