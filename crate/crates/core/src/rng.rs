//! Seeded randomness.
//!
//! Every random stream in the crate is a ChaCha12 generator whose 64-bit seed
//! is derived from `(seed, domain, index)` with the SplitMix64 finalizer, so
//! streams are independent of call order. Normal variates use the Box–Muller
//! transform, two variates per pair of uniforms (cosine branch first).

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub type Rng = ChaCha12Rng;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream identifiers so that, e.g., model init and noise never share a stream.
pub mod domain {
    pub const MODEL_INIT: u64 = 1;
    pub const CLIP_NOISE: u64 = 2;
    pub const PERTURB_NOISE: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const SCENE: u64 = 5;
    pub const EXPERIMENT: u64 = 6;
}

pub fn keyed(seed: u64, domain: u64, index: u64) -> Rng {
    let key = mix64(mix64(mix64(seed) ^ domain) ^ index);
    Rng::seed_from_u64(key)
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut Rng) -> f64 {
    rng.gen::<f64>()
}

/// Uniform integer in `0..n`.
#[inline]
pub fn below(rng: &mut Rng, n: usize) -> usize {
    rng.gen_range(0..n)
}

/// One Box–Muller pair of independent standard normals.
#[inline]
pub fn normal_pair(rng: &mut Rng) -> (f64, f64) {
    // 1 - U keeps the radius argument in (0, 1].
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Fills `out` with standard normal variates.
pub fn fill_normal(rng: &mut Rng, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = normal_pair(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = normal_pair(rng).0;
    }
}

pub fn normal_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_normal(rng, &mut v);
    v
}
