//! Layer normalization over the last axis of row-major token matrices.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{init, Param};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    pub eps: f64,
}

/// Per-row statistics kept for the backward pass.
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Param::new(ndarray::ArrayD::from_elem(vec![dim], 1.0)),
            beta: init::zeros(&[dim]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mut xhat = Array2::zeros(x.raw_dim());
        let mut inv_std = Array1::zeros(x.nrows());
        let gamma = self.gamma.view1();
        let beta = self.beta.view1();
        let mut y = Array2::zeros(x.raw_dim());
        for i in 0..x.nrows() {
            let row = x.row(i);
            let mean = row.sum() / d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[i] = istd;
            for j in 0..x.ncols() {
                let xh = (x[[i, j]] - mean) * istd;
                xhat[[i, j]] = xh;
                y[[i, j]] = gamma[j] * xh + beta[j];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, gy: &Array2<f64>) -> Array2<f64> {
        let d = gy.ncols() as f64;
        let gamma = self.gamma.view1().to_owned();
        let mut gx = Array2::zeros(gy.raw_dim());
        {
            let mut ggamma = self.gamma.grad1_mut();
            for i in 0..gy.nrows() {
                for j in 0..gy.ncols() {
                    ggamma[j] += gy[[i, j]] * cache.xhat[[i, j]];
                }
            }
        }
        {
            let mut gbeta = self.beta.grad1_mut();
            for row in gy.rows() {
                gbeta += &row;
            }
        }
        for i in 0..gy.nrows() {
            let mut mean_g = 0.0;
            let mut mean_gx = 0.0;
            for j in 0..gy.ncols() {
                let g = gy[[i, j]] * gamma[j];
                mean_g += g;
                mean_gx += g * cache.xhat[[i, j]];
            }
            mean_g /= d;
            mean_gx /= d;
            for j in 0..gy.ncols() {
                let g = gy[[i, j]] * gamma[j];
                gx[[i, j]] = cache.inv_std[i] * (g - mean_g - cache.xhat[[i, j]] * mean_gx);
            }
        }
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
