//! Fully connected layer.

use ndarray::linalg::general_mat_mul;
use ndarray::Array2;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{init, Param};

/// y = x · w + b, with w stored [in, out].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn new(rng: &mut ChaCha12Rng, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: init::xavier_uniform(rng, &[in_dim, out_dim], in_dim, out_dim),
            b: init::zeros(&[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.view2());
        let b = self.b.view1();
        for mut row in y.rows_mut() {
            row += &b;
        }
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
        general_mat_mul(1.0, &x.t(), gy, 1.0, &mut self.w.grad2_mut());
        {
            let mut gb = self.b.grad1_mut();
            for row in gy.rows() {
                gb += &row;
            }
        }
        gy.dot(&self.w.view2().t())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}
