#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use tnn_core::Tensor3;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha20Rng, ell: usize, m: usize, n: usize, scale: f64) -> Tensor3 {
    Tensor3::from_fn(ell, m, n, |_, _, _| {
        let z: f64 = rng.sample(StandardNormal);
        scale * z
    })
}

/// `<r, x>` for a fixed probe `r`.
pub fn probe(r: &Tensor3, x: &Tensor3) -> f64 {
    r.as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| a * b)
        .sum()
}
