//! Transformer-based variational encoder/decoder over mixed-type rows.
//!
//! Each feature becomes one token: numeric features through a learned
//! per-column affine embedding of the scalar, categoricals through an
//! embedding table. A learnable CLS token is prepended and its output
//! position feeds the (mu, log sigma^2) heads. The decoder is a two-layer
//! feedforward trunk with one scalar head per numeric column and one logit
//! head per categorical column.
//!
//! Loss: MSE over numeric entries + mean per-column cross-entropy +
//! beta * KL(q(z|x) || N(0, I)), with beta annealed linearly from
//! `beta_start` to `beta_end` over the first `anneal_fraction` of epochs.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Preprocessor;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::nn::attention::BlockCache;
use crate::nn::norm::LayerNormCache;
use crate::nn::{
    gaussian_kl, gaussian_kl_backward, init, silu_backward, silu_forward, AdamW, AdamWConfig,
    LayerNorm, Linear, Param, TransformerBlock,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularVaeConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub token_dim: usize,
    /// Hidden width of each block's feedforward sublayer.
    pub ff_hidden: usize,
    pub latent_dim: usize,
    /// Hidden width of the two-layer decoder trunk.
    pub dec_hidden: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub anneal_fraction: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
}

impl Default for TabularVaeConfig {
    fn default() -> Self {
        TabularVaeConfig {
            n_layers: 3,
            n_heads: 4,
            token_dim: 32,
            ff_hidden: 64,
            latent_dim: 64,
            dec_hidden: 128,
            beta_start: 1.0,
            beta_end: 0.1,
            anneal_fraction: 0.3,
            epochs: 4000,
            lr: 2e-4,
            weight_decay: 1e-4,
            batch: 2048,
        }
    }
}

impl TabularVaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::invalid("latent_dim must be positive"));
        }
        if !(self.anneal_fraction > 0.0 && self.anneal_fraction <= 1.0) {
            return Err(Error::invalid("anneal_fraction must be in (0, 1]"));
        }
        if self.beta_end > self.beta_start {
            return Err(Error::invalid("beta_end must not exceed beta_start"));
        }
        if self.token_dim % self.n_heads != 0 {
            return Err(Error::invalid("token_dim must be divisible by n_heads"));
        }
        Ok(())
    }
}

/// Which encoded-matrix slots are numeric and which are categorical
/// (with vocab sizes). Order matches the encoded column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_features: usize,
    pub numeric: Vec<usize>,
    pub categorical: Vec<(usize, usize)>,
}

impl FeatureLayout {
    pub fn from_preprocessor(pre: &Preprocessor) -> Self {
        FeatureLayout {
            n_features: pre.n_features(),
            numeric: pre.numeric_feature_indices(),
            categorical: pre
                .categorical_features()
                .into_iter()
                .map(|(i, v)| (i, v.len()))
                .collect(),
        }
    }
}

/// Per-row posterior parameters.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mu: Array2<f64>,
    pub logvar: Array2<f64>,
}

impl Posterior {
    pub fn validate(&self) -> Result<()> {
        if self.mu.iter().chain(self.logvar.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "posterior".into(),
            });
        }
        Ok(())
    }
}

/// z = mu + sigma * eps with eps ~ N(0, I) from the seeded generator.
pub fn reparameterize(post: &Posterior, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let eps = sample_eps(post.mu.dim(), &mut rng);
    reparameterize_with_eps(post, &eps)
}

pub(crate) fn reparameterize_with_eps(post: &Posterior, eps: &Array2<f64>) -> Array2<f64> {
    let mut z = Array2::zeros(post.mu.raw_dim());
    ndarray::Zip::from(&mut z)
        .and(&post.mu)
        .and(&post.logvar)
        .and(eps)
        .for_each(|zv, &m, &lv, &e| {
            *zv = m + (0.5 * lv).exp() * e;
        });
    z
}

pub(crate) fn sample_eps(dim: (usize, usize), rng: &mut ChaCha12Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(dim, || rng.sample(rand_distr::StandardNormal))
}

/// Decoder outputs: one scalar per numeric column, one logit row per
/// categorical column.
#[derive(Debug, Clone)]
pub struct DecodedRows {
    pub numeric: Array2<f64>,
    pub cat_logits: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub ce: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub mse: f64,
    pub ce: f64,
    pub kl: f64,
    pub beta: f64,
    pub val_total: f64,
}

/// Linear anneal from `start` at epoch 0 to `end` at
/// floor(fraction * total_epochs), constant afterwards.
pub fn anneal(epoch: usize, total_epochs: usize, start: f64, end: f64, fraction: f64) -> f64 {
    let knee = (fraction * total_epochs as f64).floor() as usize;
    if epoch >= knee || knee == 0 {
        end
    } else {
        start + (end - start) * epoch as f64 / knee as f64
    }
}

pub fn beta_schedule(epoch: usize, total_epochs: usize, cfg: &TabularVaeConfig) -> f64 {
    anneal(
        epoch,
        total_epochs,
        cfg.beta_start,
        cfg.beta_end,
        cfg.anneal_fraction,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularVae {
    pub cfg: TabularVaeConfig,
    pub layout: FeatureLayout,
    // per-numeric-column affine token embeddings [n_num, token_dim]
    num_w: Param,
    num_b: Param,
    cat_emb: Vec<Param>,
    cls: Param,
    blocks: Vec<TransformerBlock>,
    final_ln: LayerNorm,
    head_mu: Linear,
    head_logvar: Linear,
    dec1: Linear,
    dec2: Linear,
    dec_num: Linear,
    dec_cats: Vec<Linear>,
}

pub struct EncodeCache {
    rows: Array2<f64>,
    block_caches: Vec<BlockCache>,
    ln_cache: LayerNormCache,
    ln_out: Array2<f64>,
    cls_hidden: Array2<f64>,
}

pub struct DecodeCache {
    z: Array2<f64>,
    h1_pre: Array2<f64>,
    h1: Array2<f64>,
    h2_pre: Array2<f64>,
    h2: Array2<f64>,
}

/// Full forward state for one loss evaluation; feed to [`TabularVae::backward`].
pub struct ForwardState {
    pub loss: LossParts,
    enc: EncodeCache,
    dec: DecodeCache,
    post: Posterior,
    eps: Array2<f64>,
    decoded: DecodedRows,
    beta: f64,
}

impl TabularVae {
    pub fn new(cfg: TabularVaeConfig, layout: FeatureLayout, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let tok = cfg.token_dim;
        let num_w = init::normal(&mut rng, &[layout.numeric.len(), tok], 0.2);
        let num_b = init::normal(&mut rng, &[layout.numeric.len(), tok], 0.02);
        let cat_emb = layout
            .categorical
            .iter()
            .map(|&(_, vocab)| init::normal(&mut rng, &[vocab, tok], 0.2))
            .collect();
        let cls = init::normal(&mut rng, &[tok], 0.02);
        let blocks = (0..cfg.n_layers)
            .map(|_| TransformerBlock::new(&mut rng, tok, cfg.n_heads, cfg.ff_hidden))
            .collect();
        let final_ln = LayerNorm::new(tok);
        let head_mu = Linear::new(&mut rng, tok, cfg.latent_dim);
        let head_logvar = Linear::new(&mut rng, tok, cfg.latent_dim);
        let dec1 = Linear::new(&mut rng, cfg.latent_dim, cfg.dec_hidden);
        let dec2 = Linear::new(&mut rng, cfg.dec_hidden, cfg.dec_hidden);
        let dec_num = Linear::new(&mut rng, cfg.dec_hidden, layout.numeric.len());
        let dec_cats = layout
            .categorical
            .iter()
            .map(|&(_, vocab)| Linear::new(&mut rng, cfg.dec_hidden, vocab))
            .collect();
        Ok(TabularVae {
            cfg,
            layout,
            num_w,
            num_b,
            cat_emb,
            cls,
            blocks,
            final_ln,
            head_mu,
            head_logvar,
            dec1,
            dec2,
            dec_num,
            dec_cats,
        })
    }

    fn seq_len(&self) -> usize {
        self.layout.n_features + 1
    }

    fn check_rows(&self, rows: &Array2<f64>) -> Result<()> {
        if rows.ncols() != self.layout.n_features {
            return Err(Error::shape(format!(
                "row width {} != feature count {}",
                rows.ncols(),
                self.layout.n_features
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "encoder input".into(),
            });
        }
        Ok(())
    }

    fn embed_tokens(&self, rows: &Array2<f64>) -> Array2<f64> {
        let bsz = rows.nrows();
        let t = self.seq_len();
        let tok = self.cfg.token_dim;
        let mut tokens = Array2::zeros((bsz * t, tok));
        let cls = self.cls.view1();
        let num_w = self.num_w.view2();
        let num_b = self.num_b.view2();
        for b in 0..bsz {
            tokens.row_mut(b * t).assign(&cls);
            for (ni, &f) in self.layout.numeric.iter().enumerate() {
                let x = rows[[b, f]];
                let mut row = tokens.row_mut(b * t + 1 + f);
                for d in 0..tok {
                    row[d] = num_w[[ni, d]] * x + num_b[[ni, d]];
                }
            }
            for (ci, &(f, vocab)) in self.layout.categorical.iter().enumerate() {
                let idx = (rows[[b, f]].round() as usize).min(vocab - 1);
                let emb = self.cat_emb[ci].view2();
                tokens.row_mut(b * t + 1 + f).assign(&emb.row(idx));
            }
        }
        tokens
    }

    /// Deterministic encode to posterior parameters.
    pub fn encode(&self, rows: &Array2<f64>) -> Result<Posterior> {
        let (post, _) = self.encode_with_cache(rows)?;
        Ok(post)
    }

    fn encode_with_cache(&self, rows: &Array2<f64>) -> Result<(Posterior, EncodeCache)> {
        self.check_rows(rows)?;
        let bsz = rows.nrows();
        let t = self.seq_len();
        let tokens = self.embed_tokens(rows);
        let mut h = tokens;
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(&h, bsz, t);
            block_caches.push(cache);
            h = next;
        }
        let (ln_out, ln_cache) = self.final_ln.forward(&h);
        let mut cls_hidden = Array2::zeros((bsz, self.cfg.token_dim));
        for b in 0..bsz {
            cls_hidden.row_mut(b).assign(&ln_out.row(b * t));
        }
        let mu = self.head_mu.forward(&cls_hidden);
        let logvar = self.head_logvar.forward(&cls_hidden);
        let post = Posterior { mu, logvar };
        post.validate()?;
        Ok((
            post,
            EncodeCache {
                rows: rows.clone(),
                block_caches,
                ln_cache,
                ln_out,
                cls_hidden,
            },
        ))
    }

    /// Deterministic decode of latent vectors.
    pub fn decode(&self, z: &Array2<f64>) -> Result<DecodedRows> {
        let (out, _) = self.decode_with_cache(z)?;
        Ok(out)
    }

    fn decode_with_cache(&self, z: &Array2<f64>) -> Result<(DecodedRows, DecodeCache)> {
        if z.ncols() != self.cfg.latent_dim {
            return Err(Error::shape(format!(
                "latent width {} != latent_dim {}",
                z.ncols(),
                self.cfg.latent_dim
            )));
        }
        let h1_pre = self.dec1.forward(z);
        let h1 = silu_forward(&h1_pre);
        let h2_pre = self.dec2.forward(&h1);
        let h2 = silu_forward(&h2_pre);
        let numeric = self.dec_num.forward(&h2);
        let cat_logits = self.dec_cats.iter().map(|l| l.forward(&h2)).collect();
        Ok((
            DecodedRows { numeric, cat_logits },
            DecodeCache {
                z: z.clone(),
                h1_pre,
                h1,
                h2_pre,
                h2,
            },
        ))
    }

    /// MSE + mean per-column CE + beta * KL on already-computed pieces.
    pub fn loss(
        &self,
        rows: &Array2<f64>,
        decoded: &DecodedRows,
        post: &Posterior,
        beta: f64,
    ) -> LossParts {
        let bsz = rows.nrows();
        let mut mse = 0.0;
        if !self.layout.numeric.is_empty() && bsz > 0 {
            for (ni, &f) in self.layout.numeric.iter().enumerate() {
                for b in 0..bsz {
                    let d = decoded.numeric[[b, ni]] - rows[[b, f]];
                    mse += d * d;
                }
            }
            mse /= (bsz * self.layout.numeric.len()) as f64;
        }
        let mut ce = 0.0;
        if !self.layout.categorical.is_empty() && bsz > 0 {
            for (ci, &(f, _)) in self.layout.categorical.iter().enumerate() {
                let logits = &decoded.cat_logits[ci];
                let mut col_ce = 0.0;
                for b in 0..bsz {
                    let target = rows[[b, f]].round() as usize;
                    col_ce -= log_softmax_at(logits, b, target);
                }
                ce += col_ce / bsz as f64;
            }
            ce /= self.layout.categorical.len() as f64;
        }
        let kl = gaussian_kl(&post.mu, &post.logvar);
        LossParts {
            total: mse + ce + beta * kl,
            mse,
            ce,
            kl,
        }
    }

    /// One full loss evaluation with reparameterized sampling. Pure: repeated
    /// calls with the same arguments produce the same state.
    pub fn forward_loss(
        &self,
        rows: &Array2<f64>,
        beta: f64,
        noise_seed: u64,
    ) -> Result<ForwardState> {
        let (post, enc) = self.encode_with_cache(rows)?;
        let mut rng = ChaCha12Rng::seed_from_u64(noise_seed);
        let eps = sample_eps(post.mu.dim(), &mut rng);
        let z = reparameterize_with_eps(&post, &eps);
        let (decoded, dec) = self.decode_with_cache(&z)?;
        let loss = self.loss(rows, &decoded, &post, beta);
        Ok(ForwardState {
            loss,
            enc,
            dec,
            post,
            eps,
            decoded,
            beta,
        })
    }

    /// Accumulate gradients of `state.loss.total` into every parameter.
    pub fn backward(&mut self, state: &ForwardState) {
        let bsz = state.enc.rows.nrows();
        let t = self.seq_len();

        // decoder head gradients
        let mut gnum = Array2::zeros(state.decoded.numeric.raw_dim());
        if !self.layout.numeric.is_empty() && bsz > 0 {
            let scale = 2.0 / (bsz * self.layout.numeric.len()) as f64;
            for (ni, &f) in self.layout.numeric.iter().enumerate() {
                for b in 0..bsz {
                    gnum[[b, ni]] =
                        scale * (state.decoded.numeric[[b, ni]] - state.enc.rows[[b, f]]);
                }
            }
        }
        let mut gh2 = self.dec_num.backward(&state.dec.h2, &gnum);
        if !self.layout.categorical.is_empty() && bsz > 0 {
            let col_scale = 1.0 / (self.layout.categorical.len() * bsz) as f64;
            for (ci, &(f, _)) in self.layout.categorical.iter().enumerate() {
                let logits = &state.decoded.cat_logits[ci];
                let mut glogits = crate::nn::act::softmax_rows(logits);
                for b in 0..bsz {
                    let target = state.enc.rows[[b, f]].round() as usize;
                    glogits[[b, target]] -= 1.0;
                }
                glogits.mapv_inplace(|v| v * col_scale);
                gh2 += &self.dec_cats[ci].backward(&state.dec.h2, &glogits);
            }
        }
        let gh2_pre = silu_backward(&state.dec.h2_pre, &gh2);
        let gh1 = self.dec2.backward(&state.dec.h1, &gh2_pre);
        let gh1_pre = silu_backward(&state.dec.h1_pre, &gh1);
        let gz = self.dec1.backward(&state.dec.z, &gh1_pre);

        // reparameterization: z = mu + exp(lv/2) * eps
        let mut gmu = gz.clone();
        let mut glogvar = Array2::zeros(gz.raw_dim());
        ndarray::Zip::from(&mut glogvar)
            .and(&gz)
            .and(&state.eps)
            .and(&state.post.logvar)
            .for_each(|g, &gzv, &e, &lv| {
                *g = gzv * e * 0.5 * (0.5 * lv).exp();
            });
        gaussian_kl_backward(
            &state.post.mu,
            &state.post.logvar,
            state.beta,
            &mut gmu,
            &mut glogvar,
        );

        // encoder heads and trunk
        let mut g_cls_hidden = self.head_mu.backward(&state.enc.cls_hidden, &gmu);
        g_cls_hidden += &self.head_logvar.backward(&state.enc.cls_hidden, &glogvar);
        let mut g_ln_out = Array2::zeros(state.enc.ln_out.raw_dim());
        for b in 0..bsz {
            g_ln_out.row_mut(b * t).assign(&g_cls_hidden.row(b));
        }
        let mut gh = self.final_ln.backward(&state.enc.ln_cache, &g_ln_out);
        for i in (0..self.blocks.len()).rev() {
            gh = self.blocks[i].backward(&state.enc.block_caches[i], &gh);
        }

        // token embedding gradients
        let tok = self.cfg.token_dim;
        {
            let mut num_gw = self.num_w.grad2_mut();
            for (ni, &f) in self.layout.numeric.iter().enumerate() {
                for b in 0..bsz {
                    let x = state.enc.rows[[b, f]];
                    for d in 0..tok {
                        num_gw[[ni, d]] += gh[[b * t + 1 + f, d]] * x;
                    }
                }
            }
        }
        {
            let mut num_gb = self.num_b.grad2_mut();
            for (ni, &f) in self.layout.numeric.iter().enumerate() {
                for b in 0..bsz {
                    for d in 0..tok {
                        num_gb[[ni, d]] += gh[[b * t + 1 + f, d]];
                    }
                }
            }
        }
        for (ci, &(f, vocab)) in self.layout.categorical.iter().enumerate() {
            let mut gemb = self.cat_emb[ci].grad2_mut();
            for b in 0..bsz {
                let idx = (state.enc.rows[[b, f]].round() as usize).min(vocab - 1);
                for d in 0..tok {
                    gemb[[idx, d]] += gh[[b * t + 1 + f, d]];
                }
            }
        }
        let mut gcls = self.cls.grad1_mut();
        for b in 0..bsz {
            for d in 0..tok {
                gcls[d] += gh[[b * t, d]];
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = vec![&mut self.num_w, &mut self.num_b];
        p.extend(self.cat_emb.iter_mut());
        p.push(&mut self.cls);
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        p.extend(self.final_ln.params_mut());
        p.extend(self.head_mu.params_mut());
        p.extend(self.head_logvar.params_mut());
        p.extend(self.dec1.params_mut());
        p.extend(self.dec2.params_mut());
        p.extend(self.dec_num.params_mut());
        for l in &mut self.dec_cats {
            p.extend(l.params_mut());
        }
        p
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

fn log_softmax_at(logits: &Array2<f64>, row: usize, idx: usize) -> f64 {
    let r = logits.slice(s![row, ..]);
    let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = r.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    logits[[row, idx]] - lse
}

/// Train on the train matrix with per-epoch validation; keeps the
/// best-on-validation parameters (validation evaluated at `beta_end`).
pub fn fit(
    train: &Array2<f64>,
    val: &Array2<f64>,
    cfg: &TabularVaeConfig,
    layout: &FeatureLayout,
    seed: u64,
) -> Result<(TabularVae, Vec<EpochLog>)> {
    cfg.validate()?;
    let mut model = TabularVae::new(cfg.clone(), layout.clone(), derive_seed(seed, "tabvae-init"))?;
    let mut opt = AdamW::new(AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    });
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "tabvae-shuffle"));
    let eps_base = derive_seed(seed, "tabvae-eps");
    let val_eps = derive_seed(seed, "tabvae-val-eps");
    let n = train.nrows();
    let batch = cfg.batch.clamp(1, n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, TabularVae)> = None;
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let beta = beta_schedule(epoch, cfg.epochs, cfg);
        order.shuffle(&mut shuffle_rng);
        let mut sums = (0.0, 0.0, 0.0, 0.0);
        let mut seen = 0usize;
        for chunk in order.chunks(batch) {
            let rows = gather_rows(train, chunk);
            let state = model.forward_loss(&rows, beta, eps_base.wrapping_add(step))?;
            if !state.loss.total.is_finite() {
                return Err(Error::Diverged {
                    unit: "epoch",
                    index: epoch,
                    detail: format!("non-finite training loss {:?}", state.loss),
                });
            }
            model.zero_grads();
            model.backward(&state);
            opt.step(&mut model.params_mut());
            let w = chunk.len() as f64;
            sums.0 += state.loss.total * w;
            sums.1 += state.loss.mse * w;
            sums.2 += state.loss.ce * w;
            sums.3 += state.loss.kl * w;
            seen += chunk.len();
            step += 1;
        }
        let inv = 1.0 / seen.max(1) as f64;
        let val_total = if val.nrows() > 0 {
            model.forward_loss(val, cfg.beta_end, val_eps)?.loss.total
        } else {
            sums.0 * inv
        };
        if !val_total.is_finite() {
            return Err(Error::Diverged {
                unit: "epoch",
                index: epoch,
                detail: "non-finite validation loss".into(),
            });
        }
        if best.as_ref().is_none_or(|(b, _)| val_total < *b) {
            best = Some((val_total, model.clone()));
        }
        log.push(EpochLog {
            epoch,
            total: sums.0 * inv,
            mse: sums.1 * inv,
            ce: sums.2 * inv,
            kl: sums.3 * inv,
            beta,
            val_total,
        });
    }
    let model = best.map(|(_, m)| m).unwrap_or(model);
    Ok((model, log))
}

pub(crate) fn gather_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), m.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn tiny_layout() -> FeatureLayout {
        FeatureLayout {
            n_features: 3,
            numeric: vec![0, 1],
            categorical: vec![(2, 2)],
        }
    }

    fn tiny_cfg() -> TabularVaeConfig {
        TabularVaeConfig {
            n_layers: 1,
            n_heads: 1,
            token_dim: 2,
            ff_hidden: 4,
            latent_dim: 2,
            dec_hidden: 4,
            beta_start: 1.0,
            beta_end: 0.1,
            anneal_fraction: 0.3,
            epochs: 10,
            lr: 1e-3,
            weight_decay: 0.0,
            batch: 8,
        }
    }

    fn tiny_rows() -> Array2<f64> {
        array![[0.3, -1.1, 0.0], [1.2, 0.4, 1.0], [-0.7, 0.9, 1.0]]
    }

    #[test]
    fn encode_shapes_and_determinism() {
        let m = TabularVae::new(tiny_cfg(), tiny_layout(), 3).unwrap();
        let rows = tiny_rows();
        let p = m.encode(&rows).unwrap();
        assert_eq!(p.mu.dim(), (3, 2));
        assert_eq!(p.logvar.dim(), (3, 2));
        assert!(p.mu.iter().all(|v| v.is_finite()));
        let q = m.encode(&rows).unwrap();
        assert_eq!(p.mu, q.mu);
        assert_eq!(p.logvar, q.logvar);
    }

    #[test]
    fn identical_rows_have_identical_posteriors() {
        let m = TabularVae::new(tiny_cfg(), tiny_layout(), 3).unwrap();
        let rows = array![[0.5, 0.5, 1.0], [0.5, 0.5, 1.0]];
        let p = m.encode(&rows).unwrap();
        assert_eq!(p.mu.row(0), p.mu.row(1));
        assert_eq!(p.logvar.row(0), p.logvar.row(1));
    }

    #[test]
    fn permuting_batch_rows_permutes_posteriors() {
        let m = TabularVae::new(tiny_cfg(), tiny_layout(), 3).unwrap();
        let rows = tiny_rows();
        let mut swapped = rows.clone();
        let r0 = rows.row(0).to_owned();
        let r2 = rows.row(2).to_owned();
        swapped.row_mut(0).assign(&r2);
        swapped.row_mut(2).assign(&r0);
        let p = m.encode(&rows).unwrap();
        let q = m.encode(&swapped).unwrap();
        assert_eq!(p.mu.row(0), q.mu.row(2));
        assert_eq!(p.mu.row(2), q.mu.row(0));
        assert_eq!(p.mu.row(1), q.mu.row(1));
    }

    #[test]
    fn width_mismatch_rejected() {
        let m = TabularVae::new(tiny_cfg(), tiny_layout(), 3).unwrap();
        assert!(m.encode(&Array2::zeros((2, 5))).is_err());
        assert!(m.encode(&array![[f64::NAN, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn reparameterize_degenerate_and_deterministic() {
        let post = Posterior {
            mu: array![[1.5, -2.0]],
            logvar: array![[-40.0, -40.0]],
        };
        let z = reparameterize(&post, 0);
        assert!((z[[0, 0]] - 1.5).abs() < 1e-8);
        assert!((z[[0, 1]] + 2.0).abs() < 1e-8);
        let post2 = Posterior {
            mu: Array2::zeros((4, 3)),
            logvar: Array2::zeros((4, 3)),
        };
        assert_eq!(reparameterize(&post2, 9), reparameterize(&post2, 9));
        assert_ne!(reparameterize(&post2, 9), reparameterize(&post2, 10));
    }

    #[test]
    fn reparameterize_sample_mean_matches_mu() {
        // Monte-Carlo oracle: the mean of n draws lands within
        // 5 sigma / sqrt(n) of mu.
        let n = 100_000;
        let post = Posterior {
            mu: Array2::from_elem((n, 1), 0.7),
            logvar: Array2::from_elem((n, 1), 0.3),
        };
        let z = reparameterize(&post, 42);
        let mean = z.sum() / n as f64;
        let sigma = (0.5f64 * 0.3).exp();
        let bound = 5.0 * sigma / (n as f64).sqrt();
        assert!((mean - 0.7).abs() < bound, "mean {mean}, bound {bound}");
    }

    #[test]
    fn decode_shapes() {
        let layout = FeatureLayout {
            n_features: 7,
            numeric: vec![0, 1, 2, 3, 4],
            categorical: vec![(5, 3), (6, 4)],
        };
        let cfg = TabularVaeConfig {
            latent_dim: 2,
            ..tiny_cfg()
        };
        let m = TabularVae::new(cfg, layout, 1).unwrap();
        let out = m.decode(&Array2::zeros((2, 2))).unwrap();
        assert_eq!(out.numeric.dim(), (2, 5));
        assert_eq!(out.cat_logits.len(), 2);
        assert_eq!(out.cat_logits[0].dim(), (2, 3));
        assert_eq!(out.cat_logits[1].dim(), (2, 4));
        assert!(m.decode(&Array2::zeros((2, 3))).is_err());
        // decode determinism
        let a = m.decode(&Array2::ones((1, 2))).unwrap();
        let b = m.decode(&Array2::ones((1, 2))).unwrap();
        assert_eq!(a.numeric, b.numeric);
    }

    #[test]
    fn loss_zero_for_perfect_reconstruction_and_standard_posterior() {
        let m = TabularVae::new(tiny_cfg(), tiny_layout(), 3).unwrap();
        let rows = array![[0.5, -0.5, 1.0]];
        // "perfect" categorical logits: all mass on the target index
        let decoded = DecodedRows {
            numeric: array![[0.5, -0.5]],
            cat_logits: vec![array![[-1000.0, 0.0]]],
        };
        let post = Posterior {
            mu: Array2::zeros((1, 2)),
            logvar: Array2::zeros((1, 2)),
        };
        let l = m.loss(&rows, &decoded, &post, 1.0);
        assert!(l.total.abs() < 1e-12, "{l:?}");
    }

    #[test]
    fn kl_term_half_for_unit_mean_single_dim() {
        let cfg = TabularVaeConfig {
            latent_dim: 1,
            ..tiny_cfg()
        };
        let m = TabularVae::new(cfg, tiny_layout(), 3).unwrap();
        let rows = array![[0.0, 0.0, 0.0]];
        let decoded = DecodedRows {
            numeric: array![[0.0, 0.0]],
            cat_logits: vec![array![[0.0, -1000.0]]],
        };
        let post = Posterior {
            mu: array![[1.0]],
            logvar: array![[0.0]],
        };
        let l = m.loss(&rows, &decoded, &post, 1.0);
        assert!((l.kl - 0.5).abs() < 1e-12);
        assert!((l.total - 0.5).abs() < 1e-12);
    }

    #[test]
    fn beta_schedule_endpoints_midpoint_and_monotonicity() {
        let cfg = TabularVaeConfig {
            epochs: 100,
            ..tiny_cfg()
        };
        assert_eq!(beta_schedule(0, 100, &cfg), 1.0);
        assert!((beta_schedule(15, 100, &cfg) - 0.55).abs() < 1e-12);
        assert!((beta_schedule(30, 100, &cfg) - 0.1).abs() < 1e-12);
        assert_eq!(beta_schedule(99, 100, &cfg), 0.1);
        let mut prev = f64::INFINITY;
        for e in 0..100 {
            let b = beta_schedule(e, 100, &cfg);
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        // Tiny double-precision model, full loss path with fixed noise.
        let mut model = TabularVae::new(tiny_cfg(), tiny_layout(), 7).unwrap();
        let rows = tiny_rows();
        let beta = 0.7;
        let noise_seed = 123;

        let state = model.forward_loss(&rows, beta, noise_seed).unwrap();
        model.zero_grads();
        model.backward(&state);
        let analytic: Vec<Vec<f64>> = model
            .params_mut()
            .iter()
            .map(|p| p.grad.iter().copied().collect())
            .collect();

        let h = 1e-5;
        let mut max_rel = 0.0f64;
        let n_params = analytic.len();
        for pi in 0..n_params {
            let len = model.params_mut()[pi].len();
            for k in 0..len {
                let orig = model.params_mut()[pi].value.as_slice_mut().unwrap()[k];
                model.params_mut()[pi].value.as_slice_mut().unwrap()[k] = orig + h;
                let lp = model.forward_loss(&rows, beta, noise_seed).unwrap().loss.total;
                model.params_mut()[pi].value.as_slice_mut().unwrap()[k] = orig - h;
                let lm = model.forward_loss(&rows, beta, noise_seed).unwrap().loss.total;
                model.params_mut()[pi].value.as_slice_mut().unwrap()[k] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = analytic[pi][k];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-4);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel <= 1e-3, "max rel grad error {max_rel}");
    }

    #[test]
    fn overfit_eight_rows() {
        // Overfit oracle: on 8 rows the final total must fall under 10% of
        // the first epoch's loss (beta annealed to a small floor so the KL
        // budget does not dominate the bound).
        let layout = tiny_layout();
        let cfg = TabularVaeConfig {
            n_layers: 2,
            n_heads: 2,
            token_dim: 8,
            ff_hidden: 16,
            latent_dim: 4,
            dec_hidden: 32,
            beta_start: 1.0,
            beta_end: 0.01,
            anneal_fraction: 0.3,
            epochs: 500,
            lr: 3e-3,
            weight_decay: 0.0,
            batch: 8,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let mut train = Array2::zeros((8, 3));
        for b in 0..8 {
            train[[b, 0]] = rng.gen_range(-1.0..1.0);
            train[[b, 1]] = rng.gen_range(-1.0..1.0);
            train[[b, 2]] = (b % 2) as f64;
        }
        let (_, log) = fit(&train, &Array2::zeros((0, 3)), &cfg, &layout, 5).unwrap();
        let first = log.first().unwrap().total;
        let last = log.last().unwrap().total;
        assert!(last < 0.1 * first, "no overfit: first {first}, last {last}");
    }

    #[test]
    fn overfit_reproduces_categoricals_by_argmax() {
        let layout = tiny_layout();
        let cfg = TabularVaeConfig {
            n_layers: 2,
            n_heads: 2,
            token_dim: 8,
            ff_hidden: 16,
            latent_dim: 4,
            dec_hidden: 32,
            beta_end: 0.01,
            epochs: 500,
            lr: 3e-3,
            weight_decay: 0.0,
            batch: 8,
            ..tiny_cfg()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut train = Array2::zeros((8, 3));
        for b in 0..8 {
            train[[b, 0]] = rng.gen_range(-1.0..1.0);
            train[[b, 1]] = rng.gen_range(-1.0..1.0);
            train[[b, 2]] = (b % 2) as f64;
        }
        let (model, _) = fit(&train, &Array2::zeros((0, 3)), &cfg, &layout, 6).unwrap();
        let post = model.encode(&train).unwrap();
        let decoded = model.decode(&post.mu).unwrap();
        for b in 0..8 {
            let logits = decoded.cat_logits[0].row(b);
            let argmax = if logits[0] >= logits[1] { 0.0 } else { 1.0 };
            assert_eq!(argmax, train[[b, 2]], "row {b}");
        }
    }

    #[test]
    fn fit_is_deterministic_and_beta_column_matches_schedule() {
        let cfg = TabularVaeConfig {
            epochs: 12,
            ..tiny_cfg()
        };
        let rows = tiny_rows();
        let val = tiny_rows();
        let (_, log1) = fit(&rows, &val, &cfg, &tiny_layout(), 9).unwrap();
        let (_, log2) = fit(&rows, &val, &cfg, &tiny_layout(), 9).unwrap();
        for (a, b) in log1.iter().zip(&log2) {
            assert_eq!(a.total.to_bits(), b.total.to_bits());
            assert_eq!(a.val_total.to_bits(), b.val_total.to_bits());
        }
        for row in &log1 {
            assert_eq!(row.beta, beta_schedule(row.epoch, cfg.epochs, &cfg));
        }
    }
}
