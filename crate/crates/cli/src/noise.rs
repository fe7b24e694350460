//! Seeded initial noise.
//!
//! Generator `chacha20-boxmuller-v1`: a ChaCha20 stream seeded with
//! `seed_from_u64(seed)` feeds Box–Muller pairs. Each pair consumes two
//! `u64` draws, `u1 = (a >> 11) + 1` and `u2 = b >> 11` scaled by `2^-53`,
//! and yields `sqrt(-2 ln u1) * (cos 2πu2, sin 2πu2)` in that order. Cells
//! are filled in row-major `(f, c, h, w)` order and rounded to `f32`, the
//! precision of latent files.

use std::f64::consts::TAU;

use motion_scaffold::latent::LatentTensor;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const NOISE_GENERATOR: &str = "chacha20-boxmuller-v1";

const SCALE: f64 = 1.0 / (1u64 << 53) as f64;

pub fn init_noise(shape: [usize; 4], seed: u64) -> LatentTensor {
    let n: usize = shape.iter().product();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n + 1);
    while data.len() < n {
        let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (TAU * u2).sin_cos();
        data.push(radius * cos);
        data.push(radius * sin);
    }
    data.truncate(n);
    LatentTensor::new(shape, data)
        .expect("Box-Muller output is finite")
        .to_f32_precision()
}
