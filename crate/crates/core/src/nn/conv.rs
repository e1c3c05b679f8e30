//! 2-D convolution (SAME padding, configurable stride) via im2col, plus a
//! nearest-neighbor upsampling layer. Sized for tiny grayscale grids, not for
//! large images.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{init, Param};

/// SAME padding for a given input extent: output = ceil(in / stride),
/// total pad split with the extra cell on the trailing edge.
fn same_pad(in_len: usize, kernel: usize, stride: usize) -> (usize, usize, usize) {
    let out = in_len.div_ceil(stride);
    let needed = ((out - 1) * stride + kernel).saturating_sub(in_len);
    let beg = needed / 2;
    (out, beg, needed - beg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv2d {
    /// Kernel stored [out_c, in_c, kh, kw].
    pub w: Param,
    pub b: Param,
    pub stride: usize,
}

pub struct ConvCache {
    cols: Array2<f64>,
    in_shape: (usize, usize, usize, usize),
    out_hw: (usize, usize),
    pad: (usize, usize),
}

impl Conv2d {
    pub fn new(rng: &mut ChaCha12Rng, in_c: usize, out_c: usize, kernel: usize, stride: usize) -> Self {
        let fan_in = in_c * kernel * kernel;
        let fan_out = out_c * kernel * kernel;
        Conv2d {
            w: init::xavier_uniform(rng, &[out_c, in_c, kernel, kernel], fan_in, fan_out),
            b: init::zeros(&[out_c]),
            stride,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.w.value.shape()[0]
    }

    fn kernel(&self) -> usize {
        self.w.value.shape()[2]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let (oh, _, _) = same_pad(h, self.kernel(), self.stride);
        let (ow, _, _) = same_pad(w, self.kernel(), self.stride);
        (oh, ow)
    }

    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, ConvCache) {
        let (bsz, in_c, h, w) = x.dim();
        let k = self.kernel();
        let out_c = self.out_channels();
        let (oh, pad_top, _) = same_pad(h, k, self.stride);
        let (ow, pad_left, _) = same_pad(w, k, self.stride);

        let mut cols = Array2::zeros((bsz * oh * ow, in_c * k * k));
        for b in 0..bsz {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (b * oh + oy) * ow + ox;
                    let mut col = 0;
                    for ci in 0..in_c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * self.stride + ky) as isize - pad_top as isize;
                                let ix = (ox * self.stride + kx) as isize - pad_left as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    cols[[row, col]] = x[[b, ci, iy as usize, ix as usize]];
                                }
                                col += 1;
                            }
                        }
                    }
                }
            }
        }

        // w flattened to [out_c, in_c*k*k]; y2 = cols · w2^T
        let w2 = self
            .w
            .value
            .view()
            .into_shape_with_order((out_c, in_c * k * k))
            .unwrap();
        let mut y2 = Array2::zeros((bsz * oh * ow, out_c));
        general_mat_mul(1.0, &cols, &w2.t(), 0.0, &mut y2);
        let bias = self.b.view1();
        for mut row in y2.rows_mut() {
            row += &bias;
        }

        let mut y = Array4::zeros((bsz, out_c, oh, ow));
        for b in 0..bsz {
            for co in 0..out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        y[[b, co, oy, ox]] = y2[[(b * oh + oy) * ow + ox, co]];
                    }
                }
            }
        }
        let cache = ConvCache {
            cols,
            in_shape: (bsz, in_c, h, w),
            out_hw: (oh, ow),
            pad: (pad_top, pad_left),
        };
        (y, cache)
    }

    pub fn backward(&mut self, cache: &ConvCache, gy: &Array4<f64>) -> Array4<f64> {
        let (bsz, in_c, h, w) = cache.in_shape;
        let (oh, ow) = cache.out_hw;
        let (pad_top, pad_left) = cache.pad;
        let k = self.kernel();
        let out_c = self.out_channels();

        let mut gy2 = Array2::zeros((bsz * oh * ow, out_c));
        for b in 0..bsz {
            for co in 0..out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        gy2[[(b * oh + oy) * ow + ox, co]] = gy[[b, co, oy, ox]];
                    }
                }
            }
        }

        {
            let mut gb = self.b.grad1_mut();
            for row in gy2.rows() {
                gb += &row;
            }
        }
        {
            // gw2 [out_c, in_c*k*k] += gy2^T · cols
            let mut gw = self
                .w
                .grad
                .view_mut()
                .into_shape_with_order((out_c, in_c * k * k))
                .unwrap();
            general_mat_mul(1.0, &gy2.t(), &cache.cols, 1.0, &mut gw);
        }

        let w2 = self
            .w
            .value
            .view()
            .into_shape_with_order((out_c, in_c * k * k))
            .unwrap();
        let mut gcols = Array2::zeros((bsz * oh * ow, in_c * k * k));
        general_mat_mul(1.0, &gy2, &w2, 0.0, &mut gcols);

        let mut gx = Array4::zeros((bsz, in_c, h, w));
        for b in 0..bsz {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (b * oh + oy) * ow + ox;
                    let mut col = 0;
                    for ci in 0..in_c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * self.stride + ky) as isize - pad_top as isize;
                                let ix = (ox * self.stride + kx) as isize - pad_left as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    gx[[b, ci, iy as usize, ix as usize]] += gcols[[row, col]];
                                }
                                col += 1;
                            }
                        }
                    }
                }
            }
        }
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Nearest-neighbor resize to a fixed target extent. The target may be any
/// size; source pixel = floor(target index * in / out).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NearestUpsample {
    pub out_h: usize,
    pub out_w: usize,
}

impl NearestUpsample {
    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (bsz, c, h, w) = x.dim();
        let mut y = Array4::zeros((bsz, c, self.out_h, self.out_w));
        for b in 0..bsz {
            for ci in 0..c {
                for oy in 0..self.out_h {
                    let iy = oy * h / self.out_h;
                    for ox in 0..self.out_w {
                        let ix = ox * w / self.out_w;
                        y[[b, ci, oy, ox]] = x[[b, ci, iy, ix]];
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, in_hw: (usize, usize), gy: &Array4<f64>) -> Array4<f64> {
        let (bsz, c, _, _) = gy.dim();
        let (h, w) = in_hw;
        let mut gx = Array4::zeros((bsz, c, h, w));
        for b in 0..bsz {
            for ci in 0..c {
                for oy in 0..self.out_h {
                    let iy = oy * h / self.out_h;
                    for ox in 0..self.out_w {
                        let ix = ox * w / self.out_w;
                        gx[[b, ci, iy, ix]] += gy[[b, ci, oy, ox]];
                    }
                }
            }
        }
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_pad_reduces_ten_to_five_three_two() {
        assert_eq!(same_pad(10, 3, 2).0, 5);
        assert_eq!(same_pad(5, 3, 2).0, 3);
        assert_eq!(same_pad(3, 3, 2).0, 2);
    }

    #[test]
    fn identity_kernel_passes_through() {
        use rand::SeedableRng;
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut conv = Conv2d::new(&mut rng, 1, 1, 1, 1);
        conv.w.value.fill(1.0);
        conv.b.value.fill(0.0);
        let x = Array4::from_shape_fn((1, 1, 4, 4), |(_, _, i, j)| (i * 4 + j) as f64);
        let (y, _) = conv.forward(&x);
        assert_eq!(y, x);
    }

    #[test]
    fn upsample_then_exact_sizes() {
        let up = NearestUpsample { out_h: 3, out_w: 3 };
        let x = Array4::from_elem((1, 1, 2, 2), 1.0);
        let y = up.forward(&x);
        assert_eq!(y.dim(), (1, 1, 3, 3));
        assert!(y.iter().all(|&v| v == 1.0));
    }
}
