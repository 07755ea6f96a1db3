//! Keyed random streams.
//!
//! Every random draw in the simulator comes from a stream addressed by a
//! tuple of identifiers (seed, drop, purpose, link, ...). The stream state is
//! derived from the key alone, so results do not depend on the order or the
//! thread in which streams are consumed.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Generator type behind every stream.
pub type StreamRng = ChaCha8Rng;

/// Purpose tags separating independent stream families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    UeDrop = 1,
    LargeScale = 2,
    Rays = 3,
    Fading = 4,
    Traffic = 5,
    Estimation = 6,
    MonteCarlo = 7,
    Test = 8,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds an independent generator for `(seed, purpose, ids...)`.
pub fn stream(seed: u64, purpose: Stream, ids: &[u64]) -> StreamRng {
    let mut h = splitmix64(seed ^ 0x5EED_0F0F_F00D_CAFE);
    h = splitmix64(h ^ purpose as u64);
    for &id in ids {
        h = splitmix64(h ^ id.wrapping_mul(0xA076_1D64_78BD_642F));
    }
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Circularly-symmetric complex Gaussian sample with unit variance.
#[inline]
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[inline]
pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
