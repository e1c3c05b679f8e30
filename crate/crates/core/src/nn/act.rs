//! Smooth activations with explicit backward forms.
//!
//! SiLU is used throughout (smooth everywhere, which keeps finite-difference
//! gradient checks clean); sigmoid bounds decoder outputs to [0, 1].

use ndarray::{Array2, Zip};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// y = x * sigmoid(x), elementwise.
pub fn silu_forward(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v * sigmoid(v))
}

/// Chain `gy` through SiLU given the forward input `x`.
pub fn silu_backward(x: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
    let mut gx = Array2::zeros(x.raw_dim());
    Zip::from(&mut gx).and(x).and(gy).for_each(|g, &v, &gy| {
        let s = sigmoid(v);
        *g = gy * (s * (1.0 + v * (1.0 - s)));
    });
    gx
}

/// SiLU over tensors of any rank.
pub fn silu_forward_d<D: ndarray::Dimension>(x: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    x.mapv(|v| v * sigmoid(v))
}

pub fn silu_backward_d<D: ndarray::Dimension>(
    x: &ndarray::Array<f64, D>,
    gy: &ndarray::Array<f64, D>,
) -> ndarray::Array<f64, D> {
    let mut gx = ndarray::Array::zeros(x.raw_dim());
    ndarray::Zip::from(&mut gx).and(x).and(gy).for_each(|g, &v, &gy| {
        let s = sigmoid(v);
        *g = gy * (s * (1.0 + v * (1.0 - s)));
    });
    gx
}

/// Elementwise sigmoid over a matrix.
pub fn sigmoid_forward(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(sigmoid)
}

/// Chain `gy` through sigmoid given the forward *output* `y`.
pub fn sigmoid_backward_from_output(y: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
    let mut gx = Array2::zeros(y.raw_dim());
    Zip::from(&mut gx).and(y).and(gy).for_each(|g, &yv, &gyv| {
        *g = gyv * yv * (1.0 - yv);
    });
    gx
}

/// Row-wise softmax (numerically stabilized).
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

/// Chain `gy` through a row-wise softmax with forward output `a`:
/// gx = a ⊙ (gy − rowsum(gy ⊙ a)).
pub fn softmax_rows_backward(a: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
    let mut gx = Array2::zeros(a.raw_dim());
    for i in 0..a.nrows() {
        let dot: f64 = a.row(i).iter().zip(gy.row(i).iter()).map(|(&av, &gv)| av * gv).sum();
        for j in 0..a.ncols() {
            gx[[i, j]] = a[[i, j]] * (gy[[i, j]] - dot);
        }
    }
    gx
}
