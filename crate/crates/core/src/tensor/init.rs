//! Seeded weight initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Tensor;

/// Standard deviation for convolution and transposed-convolution weights.
pub const CONV_INIT_STD: f64 = 0.02;

pub fn normal(shape: impl Into<Vec<usize>>, mean: f64, std: f64, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(mean, std).expect("std must be finite and non-negative");
    Tensor::from_fn(shape, |_| dist.sample(rng))
}

/// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_fan_in(shape: impl Into<Vec<usize>>, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound))
}
