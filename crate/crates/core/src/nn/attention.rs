//! Multi-head self-attention and the pre-norm Transformer block.
//!
//! Token activations are stored row-major as [batch * seq_len, dim]; the
//! (batch, seq) split is passed explicitly so attention can slice per-sample
//! blocks without reshaping.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::act::{silu_backward, silu_forward, softmax_rows, softmax_rows_backward};
use super::norm::LayerNormCache;
use super::{LayerNorm, Linear, Param};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub n_heads: usize,
}

pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    // softmax weights per (batch * head), each [seq, seq]
    attn: Array3<f64>,
    concat: Array2<f64>,
    batch: usize,
    seq: usize,
}

impl MultiHeadAttention {
    pub fn new(rng: &mut ChaCha12Rng, dim: usize, n_heads: usize) -> Self {
        assert!(dim % n_heads == 0, "dim must be divisible by n_heads");
        MultiHeadAttention {
            wq: Linear::new(rng, dim, dim),
            wk: Linear::new(rng, dim, dim),
            wv: Linear::new(rng, dim, dim),
            wo: Linear::new(rng, dim, dim),
            n_heads,
        }
    }

    pub fn forward(&self, x: &Array2<f64>, batch: usize, seq: usize) -> (Array2<f64>, AttentionCache) {
        let dim = x.ncols();
        let dk = dim / self.n_heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let mut attn = Array3::zeros((batch * self.n_heads, seq, seq));
        let mut concat = Array2::zeros((batch * seq, dim));
        for b in 0..batch {
            let rows = s![b * seq..(b + 1) * seq, ..];
            for h in 0..self.n_heads {
                let cols = s![.., h * dk..(h + 1) * dk];
                let qb = q.slice(rows).slice_move(cols);
                let kb = k.slice(rows).slice_move(cols);
                let vb = v.slice(rows).slice_move(cols);
                let mut scores = Array2::zeros((seq, seq));
                general_mat_mul(scale, &qb, &kb.t(), 0.0, &mut scores);
                let a = softmax_rows(&scores);
                let mut out = Array2::zeros((seq, dk));
                general_mat_mul(1.0, &a, &vb, 0.0, &mut out);
                attn.slice_mut(s![b * self.n_heads + h, .., ..]).assign(&a);
                concat
                    .slice_mut(rows)
                    .slice_move(cols)
                    .assign(&out);
            }
        }
        let y = self.wo.forward(&concat);
        let cache = AttentionCache {
            x: x.clone(),
            q,
            k,
            v,
            attn,
            concat,
            batch,
            seq,
        };
        (y, cache)
    }

    pub fn backward(&mut self, cache: &AttentionCache, gy: &Array2<f64>) -> Array2<f64> {
        let (batch, seq) = (cache.batch, cache.seq);
        let dim = cache.x.ncols();
        let dk = dim / self.n_heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let gconcat = self.wo.backward(&cache.concat, gy);
        let mut gq = Array2::zeros((batch * seq, dim));
        let mut gk = Array2::zeros((batch * seq, dim));
        let mut gv = Array2::zeros((batch * seq, dim));
        for b in 0..batch {
            let rows = s![b * seq..(b + 1) * seq, ..];
            for h in 0..self.n_heads {
                let cols = s![.., h * dk..(h + 1) * dk];
                let a = cache.attn.slice(s![b * self.n_heads + h, .., ..]);
                let go = gconcat.slice(rows).slice_move(cols);
                let qb = cache.q.slice(rows).slice_move(cols);
                let kb = cache.k.slice(rows).slice_move(cols);
                let vb = cache.v.slice(rows).slice_move(cols);

                let mut ga = Array2::zeros((seq, seq));
                general_mat_mul(1.0, &go, &vb.t(), 0.0, &mut ga);
                let mut gvb = Array2::zeros((seq, dk));
                general_mat_mul(1.0, &a.t(), &go, 0.0, &mut gvb);
                let gs = softmax_rows_backward(&a.to_owned(), &ga);
                let mut gqb = Array2::zeros((seq, dk));
                general_mat_mul(scale, &gs, &kb, 0.0, &mut gqb);
                let mut gkb = Array2::zeros((seq, dk));
                general_mat_mul(scale, &gs.t(), &qb, 0.0, &mut gkb);

                gq.slice_mut(rows).slice_move(cols).assign(&gqb);
                gk.slice_mut(rows).slice_move(cols).assign(&gkb);
                gv.slice_mut(rows).slice_move(cols).assign(&gvb);
            }
        }
        let mut gx = self.wq.backward(&cache.x, &gq);
        gx += &self.wk.backward(&cache.x, &gk);
        gx += &self.wv.backward(&cache.x, &gv);
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.wq.params_mut();
        p.extend(self.wk.params_mut());
        p.extend(self.wv.params_mut());
        p.extend(self.wo.params_mut());
        p
    }
}

/// Pre-norm block: x + MHA(LN(x)), then h + FFN(LN(h)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

pub struct BlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    n2: Array2<f64>,
    h1: Array2<f64>,
    a1: Array2<f64>,
}

impl TransformerBlock {
    pub fn new(rng: &mut ChaCha12Rng, dim: usize, n_heads: usize, ff_hidden: usize) -> Self {
        TransformerBlock {
            ln1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(rng, dim, n_heads),
            ln2: LayerNorm::new(dim),
            ff1: Linear::new(rng, dim, ff_hidden),
            ff2: Linear::new(rng, ff_hidden, dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>, batch: usize, seq: usize) -> (Array2<f64>, BlockCache) {
        let (n1, ln1_cache) = self.ln1.forward(x);
        let (a, attn_cache) = self.attn.forward(&n1, batch, seq);
        let h = x + &a;
        let (n2, ln2_cache) = self.ln2.forward(&h);
        let h1 = self.ff1.forward(&n2);
        let a1 = silu_forward(&h1);
        let f = self.ff2.forward(&a1);
        let y = &h + &f;
        (
            y,
            BlockCache {
                ln1: ln1_cache,
                attn: attn_cache,
                ln2: ln2_cache,
                n2,
                h1,
                a1,
            },
        )
    }

    pub fn backward(&mut self, cache: &BlockCache, gy: &Array2<f64>) -> Array2<f64> {
        let ga1 = self.ff2.backward(&cache.a1, gy);
        let gh1 = silu_backward(&cache.h1, &ga1);
        let gn2 = self.ff1.backward(&cache.n2, &gh1);
        let mut gh = self.ln2.backward(&cache.ln2, &gn2);
        gh += gy;
        let gn1 = self.attn.backward(&cache.attn, &gh);
        let mut gx = self.ln1.backward(&cache.ln1, &gn1);
        gx += &gh;
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.ln1.params_mut();
        p.extend(self.attn.params_mut());
        p.extend(self.ln2.params_mut());
        p.extend(self.ff1.params_mut());
        p.extend(self.ff2.params_mut());
        p
    }
}
