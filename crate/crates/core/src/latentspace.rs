//! Joint latent construction: draw K reparameterized samples per row from
//! each fitted VAE, pair the draws, concatenate tabular-then-image, and
//! standardize per dimension. The whitening statistics invert exactly after
//! sampling.

use ndarray::{s, Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vae_image::ImageVae;
use crate::vae_tabular::{reparameterize_with_eps, sample_eps, Posterior, TabularVae};

/// Per-dimension standardization state. Dimensions whose population std fell
/// below 1e-8 are flagged and fixed to sigma = 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhitenStats {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
    pub flagged: Vec<usize>,
}

impl WhitenStats {
    /// Population statistics over the rows of `z`.
    pub fn fit(z: &Array2<f64>) -> Self {
        let n = z.nrows().max(1) as f64;
        let d = z.ncols();
        let mut mu = Array1::zeros(d);
        let mut sigma = Array1::zeros(d);
        let mut flagged = Vec::new();
        for j in 0..d {
            let col = z.column(j);
            let m = col.sum() / n;
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n;
            mu[j] = m;
            let s = var.sqrt();
            if s < 1e-8 {
                log::warn!("latent dimension {j} is near-constant; pinning sigma to 1");
                flagged.push(j);
                sigma[j] = 1.0;
            } else {
                sigma[j] = s;
            }
        }
        WhitenStats { mu, sigma, flagged }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn check_dim(&self, z: &Array2<f64>) -> Result<()> {
        if z.ncols() != self.dim() {
            return Err(Error::shape(format!(
                "latent width {} != whitening dimension {}",
                z.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// (z - mu) / sigma per dimension.
    pub fn whiten(&self, z_raw: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_dim(z_raw)?;
        let mut out = z_raw.clone();
        for mut row in out.rows_mut() {
            for j in 0..self.dim() {
                row[j] = (row[j] - self.mu[j]) / self.sigma[j];
            }
        }
        Ok(out)
    }

    /// z * sigma + mu per dimension.
    pub fn unwhiten(&self, z_std: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_dim(z_std)?;
        let mut out = z_std.clone();
        for mut row in out.rows_mut() {
            for j in 0..self.dim() {
                row[j] = row[j] * self.sigma[j] + self.mu[j];
            }
        }
        Ok(out)
    }
}

/// Modality segment boundaries inside the joint latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segments {
    pub tab_dim: usize,
    pub img_dim: usize,
}

impl Segments {
    pub fn joint_dim(&self) -> usize {
        self.tab_dim + self.img_dim
    }

    /// Slice a joint latent matrix into (tabular, image) parts.
    pub fn split(&self, z: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if z.ncols() != self.joint_dim() {
            return Err(Error::shape(format!(
                "joint width {} != {} + {}",
                z.ncols(),
                self.tab_dim,
                self.img_dim
            )));
        }
        Ok((
            z.slice(s![.., ..self.tab_dim]).to_owned(),
            z.slice(s![.., self.tab_dim..]).to_owned(),
        ))
    }

    pub fn concat(&self, tab: &Array2<f64>, img: &Array2<f64>) -> Result<Array2<f64>> {
        if tab.ncols() != self.tab_dim || img.ncols() != self.img_dim || tab.nrows() != img.nrows()
        {
            return Err(Error::shape("segment shapes do not match"));
        }
        let mut out = Array2::zeros((tab.nrows(), self.joint_dim()));
        out.slice_mut(s![.., ..self.tab_dim]).assign(tab);
        out.slice_mut(s![.., self.tab_dim..]).assign(img);
        Ok(out)
    }
}

/// The aggregated multimodal posterior: standardized joint latents plus the
/// bookkeeping needed to invert and to trace each latent to its source row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentBlock {
    /// Standardized joint latents, (n_rows * k) x (tab_dim + img_dim).
    pub z: Array2<f64>,
    pub segments: Segments,
    pub stats: WhitenStats,
    pub k: usize,
    /// Source row of each latent.
    pub row_of: Vec<usize>,
}

/// Draw K paired posterior samples per row from both fitted VAEs and
/// standardize the concatenation.
pub fn build_latents(
    tab_vae: &TabularVae,
    img_vae: &ImageVae,
    rows: &Array2<f64>,
    images: &Array3<f64>,
    k: usize,
    seed: u64,
) -> Result<LatentBlock> {
    if rows.nrows() != images.dim().0 {
        return Err(Error::invalid(format!(
            "rows ({}) and images ({}) are not paired",
            rows.nrows(),
            images.dim().0
        )));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let post_tab = tab_vae.encode(rows)?;
    let post_img = img_vae.encode(images)?;
    aggregate_posteriors(&post_tab, &post_img, k, seed)
}

/// Core aggregation on explicit posteriors (exposed for tests and tools).
pub fn aggregate_posteriors(
    post_tab: &Posterior,
    post_img: &Posterior,
    k: usize,
    seed: u64,
) -> Result<LatentBlock> {
    let n = post_tab.mu.nrows();
    if post_img.mu.nrows() != n {
        return Err(Error::invalid("posterior row counts differ"));
    }
    let tab_dim = post_tab.mu.ncols();
    let img_dim = post_img.mu.ncols();
    let segments = Segments { tab_dim, img_dim };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut raw = Array2::zeros((n * k, tab_dim + img_dim));
    let mut row_of = Vec::with_capacity(n * k);
    for i in 0..n {
        let tab_i = Posterior {
            mu: post_tab.mu.slice(s![i..i + 1, ..]).to_owned(),
            logvar: post_tab.logvar.slice(s![i..i + 1, ..]).to_owned(),
        };
        let img_i = Posterior {
            mu: post_img.mu.slice(s![i..i + 1, ..]).to_owned(),
            logvar: post_img.logvar.slice(s![i..i + 1, ..]).to_owned(),
        };
        for draw in 0..k {
            // paired draw-to-draw: one tabular eps then one image eps
            let eps_tab = sample_eps((1, tab_dim), &mut rng);
            let eps_img = sample_eps((1, img_dim), &mut rng);
            let z_tab = reparameterize_with_eps(&tab_i, &eps_tab);
            let z_img = reparameterize_with_eps(&img_i, &eps_img);
            let r = i * k + draw;
            raw.slice_mut(s![r, ..tab_dim]).assign(&z_tab.row(0));
            raw.slice_mut(s![r, tab_dim..]).assign(&z_img.row(0));
            row_of.push(i);
        }
    }
    let stats = WhitenStats::fit(&raw);
    let z = stats.whiten(&raw)?;
    Ok(LatentBlock {
        z,
        segments,
        stats,
        k,
        row_of,
    })
}
