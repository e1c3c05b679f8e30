//! Minimal dense-network substrate: f64 tensors, explicit forward caches,
//! hand-derived backward passes, and a decoupled-weight-decay Adam optimizer.
//!
//! Everything is deterministic: initialization and noise draws come from
//! caller-provided ChaCha generators, and all math is single-threaded f64.

pub mod act;
pub mod adamw;
pub mod attention;
pub mod conv;
pub mod init;
pub mod linear;
pub mod norm;
pub mod param;

pub use act::{sigmoid, silu_backward, silu_forward};
pub use adamw::{AdamW, AdamWConfig};
pub use attention::{MultiHeadAttention, TransformerBlock};
pub use conv::{Conv2d, NearestUpsample};
pub use linear::Linear;
pub use norm::LayerNorm;
pub use param::Param;

use ndarray::Array2;

/// Closed-form KL(N(mu, diag sigma^2) || N(0, I)) per row, averaged over the
/// batch. `logvar` holds log sigma^2.
pub fn gaussian_kl(mu: &Array2<f64>, logvar: &Array2<f64>) -> f64 {
    let n = mu.nrows() as f64;
    if mu.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (m, lv) in mu.iter().zip(logvar.iter()) {
        total += 0.5 * (m * m + lv.exp() - lv - 1.0);
    }
    total / n
}

/// Gradients of [`gaussian_kl`] with respect to `mu` and `logvar`, scaled by
/// `weight`. Accumulates into the provided buffers.
pub fn gaussian_kl_backward(
    mu: &Array2<f64>,
    logvar: &Array2<f64>,
    weight: f64,
    gmu: &mut Array2<f64>,
    glogvar: &mut Array2<f64>,
) {
    let n = mu.nrows() as f64;
    if mu.is_empty() {
        return;
    }
    let scale = weight / n;
    ndarray::Zip::from(gmu).and(mu).for_each(|g, &m| *g += scale * m);
    ndarray::Zip::from(glogvar)
        .and(logvar)
        .for_each(|g, &lv| *g += scale * 0.5 * (lv.exp() - 1.0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kl_zero_for_standard_normal_posterior() {
        let mu = Array2::zeros((4, 3));
        let lv = Array2::zeros((4, 3));
        assert_eq!(gaussian_kl(&mu, &lv), 0.0);
    }

    #[test]
    fn kl_half_for_unit_mean_single_dim() {
        let mu = array![[1.0]];
        let lv = array![[0.0]];
        assert!((gaussian_kl(&mu, &lv) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_quadrature_on_random_posterior() {
        // Independent oracle: numerically integrate the KL integrand
        // q(z) ln(q(z)/p(z)) for a 1-d Gaussian posterior.
        let mu = 0.37;
        let lv: f64 = -0.8;
        let sigma = (0.5 * lv).exp();
        let q = |z: f64| {
            let d = (z - mu) / sigma;
            (-0.5 * d * d).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let p = |z: f64| {
            (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let mut acc = 0.0;
        let n = 400_000;
        let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
        let h = (hi - lo) / n as f64;
        for i in 0..=n {
            let z = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let qz = q(z);
            if qz > 0.0 {
                acc += w * qz * (qz / p(z)).ln();
            }
        }
        let integral = acc * h;
        let closed = gaussian_kl(&array![[mu]], &array![[lv]]);
        assert!(
            (closed - integral).abs() < 1e-3,
            "closed {closed} vs quadrature {integral}"
        );
    }

    #[test]
    fn kl_is_nonnegative_on_random_posteriors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mu = Array2::from_shape_fn((3, 5), |_| rng.gen_range(-3.0..3.0));
            let lv = Array2::from_shape_fn((3, 5), |_| rng.gen_range(-4.0..2.0));
            assert!(gaussian_kl(&mu, &lv) >= 0.0);
        }
    }
}
