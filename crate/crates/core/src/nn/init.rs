//! Seeded weight initialization helpers.

use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::Param;

/// Glorot/Xavier uniform init for a weight with the given fan-in/fan-out.
pub fn xavier_uniform(rng: &mut ChaCha12Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Param {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let value = ArrayD::from_shape_simple_fn(shape.to_vec(), || rng.gen_range(-a..a));
    Param::new(value)
}

/// Small-scale normal init, used for embeddings and learned tokens.
pub fn normal(rng: &mut ChaCha12Rng, shape: &[usize], std: f64) -> Param {
    let value = ArrayD::from_shape_simple_fn(shape.to_vec(), || {
        let u: f64 = rng.sample(rand_distr::StandardNormal);
        u * std
    });
    Param::new(value)
}

/// All-zeros parameter (biases).
pub fn zeros(shape: &[usize]) -> Param {
    Param::new(ArrayD::zeros(shape.to_vec()))
}
