//! Seeded parameter initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Scalar;

/// Uniform Glorot-style init: values in `+-sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar>(
    rng: &mut ChaCha8Rng,
    fan_in: usize,
    fan_out: usize,
    n: usize,
) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| T::from_f64(rng.gen_range(-limit..limit))).collect()
}
