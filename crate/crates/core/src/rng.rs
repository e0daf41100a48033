//! Hierarchical seeding.
//!
//! Every random quantity derives from the master seed through a ChaCha12
//! stream id:
//!
//! * layout `i` (positions, shadowing, LOS states, cluster order) uses stream
//!   `i << 32`;
//! * fading draw `d` of layout `i` (channels and pilot noise) uses stream
//!   `(i << 32) | (d + 1)`.
//!
//! Streams are independent, so layouts and draws can be evaluated in any
//! order or in parallel with bit-identical results.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha12Rng;

pub fn layout_rng(seed: u64, layout: usize) -> SimRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((layout as u64) << 32);
    rng
}

pub fn fading_rng(seed: u64, layout: usize, draw: usize) -> SimRng {
    assert!(draw < u32::MAX as usize, "draw index exceeds stream space");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((layout as u64) << 32) | (draw as u64 + 1));
    rng
}

/// Circularly-symmetric complex normal with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
