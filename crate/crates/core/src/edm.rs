//! Noise-conditioned denoiser over standardized joint latents.
//!
//! The denoiser is an MLP wrapped in sigma-dependent preconditioning:
//!
//! D(x, sigma) = c_skip * x + c_out * F(c_in * x, c_noise)
//!
//! with c_skip = sd^2/(sigma^2+sd^2), c_out = sigma*sd/sqrt(sigma^2+sd^2),
//! c_in = 1/sqrt(sigma^2+sd^2), c_noise = ln(sigma)/4, and training loss
//! E[w(sigma) ||D(z + sigma*eps, sigma) - z||^2] with
//! w(sigma) = (sigma^2+sd^2)/(sigma*sd)^2, which makes the weighted term a
//! unit-weight regression on the raw network output.
//!
//! Sampling runs over a Karras rho-spaced sigma grid with optional per-step
//! churn (S_churn, S_noise) and a Heun second-order correction whenever the
//! target sigma is positive.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{silu_backward, silu_forward, AdamW, AdamWConfig, Linear, Param};

/// How training noise levels are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SigmaSampler {
    /// Uniform draw from a cosine-spaced grid over [sigma_min, sigma_max]
    /// (dense near both ends).
    CosineGrid { levels: usize },
    /// ln sigma ~ N(p_mean, p_std^2).
    LogNormal { p_mean: f64, p_std: f64 },
}

impl Default for SigmaSampler {
    fn default() -> Self {
        SigmaSampler::CosineGrid { levels: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_data: f64,
    /// Karras grid exponent.
    pub rho: f64,
    pub n_steps: usize,
    pub sigma_sampler: SigmaSampler,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule {
            sigma_min: 0.002,
            sigma_max: 80.0,
            sigma_data: 1.0,
            rho: 7.0,
            n_steps: 50,
            sigma_sampler: SigmaSampler::default(),
        }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return Err(Error::invalid("need 0 < sigma_min < sigma_max"));
        }
        if self.sigma_data <= 0.0 {
            return Err(Error::invalid("sigma_data must be positive"));
        }
        if self.n_steps < 1 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        if let SigmaSampler::CosineGrid { levels } = self.sigma_sampler {
            if levels < 2 {
                return Err(Error::invalid("cosine grid needs at least 2 levels"));
            }
        }
        Ok(())
    }

    /// EDM loss weight w(sigma) = (sigma^2 + sd^2) / (sigma * sd)^2.
    pub fn weight(&self, sigma: f64) -> f64 {
        let sd = self.sigma_data;
        (sigma * sigma + sd * sd) / (sigma * sd).powi(2)
    }

    /// Draw one training sigma.
    pub fn draw_sigma(&self, rng: &mut ChaCha12Rng) -> f64 {
        match self.sigma_sampler {
            SigmaSampler::CosineGrid { levels } => {
                let i = rng.gen_range(0..levels);
                let u = i as f64 / (levels - 1) as f64;
                self.sigma_min
                    + (self.sigma_max - self.sigma_min) * (1.0 - (std::f64::consts::PI * u).cos())
                        / 2.0
            }
            SigmaSampler::LogNormal { p_mean, p_std } => {
                let g: f64 = rng.sample(rand_distr::StandardNormal);
                (p_mean + p_std * g).exp().clamp(self.sigma_min, self.sigma_max)
            }
        }
    }
}

/// Karras sigma grid: descending from sigma_max to sigma_min over `n_steps`
/// values, with a final appended 0.
pub fn sigma_grid(schedule: &NoiseSchedule, n_steps: usize) -> Result<Vec<f64>> {
    if n_steps < 1 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    let mut grid = Vec::with_capacity(n_steps + 1);
    if n_steps == 1 {
        grid.push(schedule.sigma_max);
    } else {
        let inv_rho = 1.0 / schedule.rho;
        let a = schedule.sigma_max.powf(inv_rho);
        let b = schedule.sigma_min.powf(inv_rho);
        for i in 0..n_steps {
            let t = i as f64 / (n_steps - 1) as f64;
            grid.push((a + t * (b - a)).powf(schedule.rho));
        }
    }
    grid.push(0.0);
    Ok(grid)
}

/// Anything that maps (noised latents, sigma) to a clean-latent estimate.
pub trait Denoiser {
    fn denoise(&self, x: &Array2<f64>, sigma: f64) -> Array2<f64>;
}

/// Preconditioning coefficients for one sigma.
#[derive(Debug, Clone, Copy)]
pub struct Precond {
    pub c_skip: f64,
    pub c_out: f64,
    pub c_in: f64,
    pub c_noise: f64,
}

pub fn precond_coeffs(sigma: f64, sigma_data: f64) -> Result<Precond> {
    if sigma <= 0.0 {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let sd2 = sigma_data * sigma_data;
    let s2 = sigma * sigma;
    let denom = (s2 + sd2).sqrt();
    Ok(Precond {
        c_skip: sd2 / (s2 + sd2),
        c_out: sigma * sigma_data / denom,
        c_in: 1.0 / denom,
        c_noise: sigma.ln() / 4.0,
    })
}

/// Raw MLP with hidden widths [256, 256, 128] by default; input is the
/// scaled latent concatenated with a sinusoidal embedding of c_noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiserNet {
    pub dim: usize,
    pub emb_dim: usize,
    layers: Vec<Linear>,
    out: Linear,
}

pub struct NetCache {
    x_in: Array2<f64>,
    pre: Vec<Array2<f64>>,
    act: Vec<Array2<f64>>,
}

impl DenoiserNet {
    pub fn new(rng: &mut ChaCha12Rng, dim: usize, hidden: &[usize], emb_dim: usize) -> Result<Self> {
        if dim == 0 || hidden.is_empty() {
            return Err(Error::invalid("denoiser needs a positive dim and hidden widths"));
        }
        if emb_dim % 2 != 0 {
            return Err(Error::invalid("emb_dim must be even"));
        }
        let mut layers = Vec::with_capacity(hidden.len());
        let mut w_in = dim + emb_dim;
        for &h in hidden {
            layers.push(Linear::new(rng, w_in, h));
            w_in = h;
        }
        let out = Linear::new(rng, w_in, dim);
        Ok(DenoiserNet {
            dim,
            emb_dim,
            layers,
            out,
        })
    }

    /// Sinusoidal embedding of the per-sample c_noise scalar.
    fn noise_embedding(&self, c_noise: &Array1<f64>) -> Array2<f64> {
        let half = self.emb_dim / 2;
        let mut emb = Array2::zeros((c_noise.len(), self.emb_dim));
        for (b, &c) in c_noise.iter().enumerate() {
            for j in 0..half {
                let freq = (2.0f64).powi(j as i32);
                emb[[b, 2 * j]] = (freq * c).sin();
                emb[[b, 2 * j + 1]] = (freq * c).cos();
            }
        }
        emb
    }

    fn build_input(&self, x_scaled: &Array2<f64>, c_noise: &Array1<f64>) -> Array2<f64> {
        let emb = self.noise_embedding(c_noise);
        let mut x_in = Array2::zeros((x_scaled.nrows(), self.dim + self.emb_dim));
        x_in.slice_mut(ndarray::s![.., ..self.dim]).assign(x_scaled);
        x_in.slice_mut(ndarray::s![.., self.dim..]).assign(&emb);
        x_in
    }

    fn forward(&self, x_in: &Array2<f64>) -> (Array2<f64>, NetCache) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = Vec::with_capacity(self.layers.len());
        let mut h = x_in.clone();
        for layer in &self.layers {
            let p = layer.forward(&h);
            h = silu_forward(&p);
            pre.push(p);
            act.push(h.clone());
        }
        let y = self.out.forward(&h);
        (
            y,
            NetCache {
                x_in: x_in.clone(),
                pre,
                act,
            },
        )
    }

    fn backward(&mut self, cache: &NetCache, gy: &Array2<f64>) {
        let mut g = self.out.backward(cache.act.last().unwrap(), gy);
        for i in (0..self.layers.len()).rev() {
            let gpre = silu_backward(&cache.pre[i], &g);
            let input = if i == 0 { &cache.x_in } else { &cache.act[i - 1] };
            g = self.layers[i].backward(input, &gpre);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        for l in &mut self.layers {
            p.extend(l.params_mut());
        }
        p.extend(self.out.params_mut());
        p
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// D(x, sigma) with per-sample sigmas. Returns the denoised estimate and the
/// cache needed for the training backward pass.
pub fn precondition_with_cache(
    net: &DenoiserNet,
    x: &Array2<f64>,
    sigmas: &Array1<f64>,
    sigma_data: f64,
) -> Result<(Array2<f64>, NetCache, Vec<Precond>)> {
    if x.nrows() != sigmas.len() {
        return Err(Error::shape("one sigma per row required"));
    }
    let coeffs: Vec<Precond> = sigmas
        .iter()
        .map(|&s| precond_coeffs(s, sigma_data))
        .collect::<Result<_>>()?;
    let mut x_scaled = x.clone();
    for (b, mut row) in x_scaled.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|v| v * coeffs[b].c_in);
    }
    let c_noise = Array1::from_iter(coeffs.iter().map(|c| c.c_noise));
    let x_in = net.build_input(&x_scaled, &c_noise);
    let (raw, cache) = net.forward(&x_in);
    let mut denoised = Array2::zeros(x.raw_dim());
    for b in 0..x.nrows() {
        for d in 0..x.ncols() {
            denoised[[b, d]] = coeffs[b].c_skip * x[[b, d]] + coeffs[b].c_out * raw[[b, d]];
        }
    }
    Ok((denoised, cache, coeffs))
}

/// D(x, sigma) for a single sigma shared by the whole batch.
pub fn precondition(
    net: &DenoiserNet,
    x: &Array2<f64>,
    sigma: f64,
    sigma_data: f64,
) -> Result<Array2<f64>> {
    let sigmas = Array1::from_elem(x.nrows(), sigma);
    let (denoised, _, _) = precondition_with_cache(net, x, &sigmas, sigma_data)?;
    Ok(denoised)
}

/// Pure arithmetic part of the training objective:
/// mean_b w(sigma_b) * ||denoised_b - z_b||^2.
pub fn weighted_denoise_objective(
    z: &Array2<f64>,
    denoised: &Array2<f64>,
    sigmas: &Array1<f64>,
    schedule: &NoiseSchedule,
) -> f64 {
    let bsz = z.nrows();
    if bsz == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for b in 0..bsz {
        let mut err = 0.0;
        for d in 0..z.ncols() {
            let e = denoised[[b, d]] - z[[b, d]];
            err += e * e;
        }
        total += schedule.weight(sigmas[b]) * err;
    }
    total / bsz as f64
}

pub struct DenoiseLossState {
    pub loss: f64,
    pub mean_sigma: f64,
    cache: NetCache,
    coeffs: Vec<Precond>,
    diff: Array2<f64>,
    weights: Vec<f64>,
}

/// One training-loss evaluation: per-sample sigma from the schedule's
/// sampler, fresh Gaussian noise, preconditioned denoise, weighted residual.
pub fn denoise_loss(
    net: &DenoiserNet,
    z: &Array2<f64>,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<DenoiseLossState> {
    schedule.validate()?;
    let bsz = z.nrows();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sigmas = Array1::from_shape_fn(bsz, |_| schedule.draw_sigma(&mut rng));
    let mut x = z.clone();
    for (b, mut row) in x.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            *v += sigmas[b] * e;
        }
    }
    let (denoised, cache, coeffs) = precondition_with_cache(net, &x, &sigmas, schedule.sigma_data)?;
    let loss = weighted_denoise_objective(z, &denoised, &sigmas, schedule);
    if !loss.is_finite() {
        return Err(Error::Diverged {
            unit: "denoise-loss",
            index: 0,
            detail: format!("non-finite loss at sigmas {:?}", sigmas.to_vec()),
        });
    }
    let weights = sigmas.iter().map(|&s| schedule.weight(s)).collect();
    let diff = &denoised - z;
    let mean_sigma = sigmas.sum() / bsz.max(1) as f64;
    Ok(DenoiseLossState {
        loss,
        mean_sigma,
        cache,
        coeffs,
        diff,
        weights,
    })
}

/// Accumulate parameter gradients of a [`denoise_loss`] evaluation.
pub fn denoise_loss_backward(net: &mut DenoiserNet, state: &DenoiseLossState) {
    let bsz = state.diff.nrows();
    if bsz == 0 {
        return;
    }
    let mut graw = Array2::zeros(state.diff.raw_dim());
    for b in 0..bsz {
        let scale = 2.0 * state.weights[b] * state.coeffs[b].c_out / bsz as f64;
        for d in 0..state.diff.ncols() {
            graw[[b, d]] = scale * state.diff[[b, d]];
        }
    }
    net.backward(&state.cache, &graw);
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub s_churn: f64,
    pub s_noise: f64,
    pub n_steps: usize,
    pub seed: u64,
    /// Heun second-order correction; first-order Euler when false.
    pub heun: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            s_churn: 3.0,
            s_noise: 1.2,
            n_steps: 50,
            seed: 0,
            heun: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_churn < 0.0 {
            return Err(Error::invalid("s_churn must be non-negative"));
        }
        if self.s_noise <= 0.0 {
            return Err(Error::invalid("s_noise must be positive"));
        }
        if self.n_steps < 1 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SampleTrace {
    pub step: usize,
    pub sigma: f64,
    pub mean_norm: f64,
}

/// Draw `n` standardized latents by iterative denoising from pure noise.
pub fn sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    n: usize,
    dim: usize,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<Array2<f64>> {
    let (x, _) = sample_with_trace(denoiser, n, dim, schedule, cfg)?;
    Ok(x)
}

/// As [`sample`], also returning the per-step (sigma, mean norm) trajectory.
pub fn sample_with_trace<D: Denoiser + ?Sized>(
    denoiser: &D,
    n: usize,
    dim: usize,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<(Array2<f64>, Vec<SampleTrace>)> {
    schedule.validate()?;
    cfg.validate()?;
    if n == 0 {
        return Ok((Array2::zeros((0, dim)), Vec::new()));
    }
    let grid = sigma_grid(schedule, cfg.n_steps)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut x = Array2::from_shape_simple_fn((n, dim), || {
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        grid[0] * e
    });
    let mut trace = Vec::with_capacity(cfg.n_steps);
    let gamma_cap = 2f64.sqrt() - 1.0;
    for i in 0..cfg.n_steps {
        let sigma = grid[i];
        let sigma_next = grid[i + 1];
        let gamma = if cfg.s_churn > 0.0 {
            (cfg.s_churn / cfg.n_steps as f64).min(gamma_cap)
        } else {
            0.0
        };
        let sigma_hat = sigma * (1.0 + gamma);
        if gamma > 0.0 {
            let extra = (sigma_hat * sigma_hat - sigma * sigma).sqrt() * cfg.s_noise;
            for v in x.iter_mut() {
                let e: f64 = rng.sample(rand_distr::StandardNormal);
                *v += extra * e;
            }
        }
        let denoised = denoiser.denoise(&x, sigma_hat);
        let d = (&x - &denoised) / sigma_hat;
        let x_euler = &x + &(&d * (sigma_next - sigma_hat));
        let x_next = if sigma_next > 0.0 && cfg.heun {
            let denoised2 = denoiser.denoise(&x_euler, sigma_next);
            let d2 = (&x_euler - &denoised2) / sigma_next;
            &x + &((&d + &d2) * (0.5 * (sigma_next - sigma_hat)))
        } else {
            x_euler
        };
        x = x_next;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                unit: "sampler-step",
                index: i,
                detail: format!("non-finite state at sigma {sigma_next}"),
            });
        }
        let mean_norm = x
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / n as f64;
        trace.push(SampleTrace {
            step: i,
            sigma: sigma_next,
            mean_norm,
        });
    }
    Ok((x, trace))
}

/// A trained denoiser with its schedule, usable directly by the sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionModel {
    pub net: DenoiserNet,
    pub schedule: NoiseSchedule,
}

impl Denoiser for DiffusionModel {
    fn denoise(&self, x: &Array2<f64>, sigma: f64) -> Array2<f64> {
        precondition(&self.net, x, sigma, self.schedule.sigma_data)
            .expect("preconditioning failed on trained model")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub emb_dim: usize,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        DiffusionTrainConfig {
            steps: 1000,
            lr: 2e-4,
            weight_decay: 1e-4,
            batch: 2048,
            hidden: vec![256, 256, 128],
            emb_dim: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub mean_sigma: f64,
}

/// Minibatch optimization of the denoising loss for a fixed step count.
pub fn fit_diffusion(
    z: &Array2<f64>,
    schedule: &NoiseSchedule,
    cfg: &DiffusionTrainConfig,
    seed: u64,
) -> Result<(DiffusionModel, Vec<StepLog>)> {
    schedule.validate()?;
    if z.nrows() == 0 {
        return Err(Error::invalid("cannot fit diffusion on an empty latent block"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "edm-init"));
    let mut net = DenoiserNet::new(&mut rng, z.ncols(), &cfg.hidden, cfg.emb_dim)?;
    let mut opt = AdamW::new(AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    });
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "edm-shuffle"));
    let noise_base = derive_seed(seed, "edm-noise");
    let n = z.nrows();
    let batch = cfg.batch.clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut shuffle_rng);
    let mut cursor = 0usize;
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if cursor + batch > n {
            order.shuffle(&mut shuffle_rng);
            cursor = 0;
        }
        let idx = &order[cursor..(cursor + batch).min(n)];
        cursor += batch;
        let zb = crate::vae_tabular::gather_rows(z, idx);
        let state = denoise_loss(&net, &zb, schedule, noise_base.wrapping_add(step as u64))?;
        if !state.loss.is_finite() {
            return Err(Error::Diverged {
                unit: "step",
                index: step,
                detail: "non-finite diffusion loss".into(),
            });
        }
        net.zero_grads();
        denoise_loss_backward(&mut net, &state);
        opt.step(&mut net.params_mut());
        log.push(StepLog {
            step,
            loss: state.loss,
            mean_sigma: state.mean_sigma,
        });
    }
    Ok((
        DiffusionModel {
            net,
            schedule: schedule.clone(),
        },
        log,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net(seed: u64, dim: usize) -> DenoiserNet {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DenoiserNet::new(&mut rng, dim, &[4, 4, 3], 2).unwrap()
    }

    #[test]
    fn precond_identities() {
        let sd = 1.3;
        let c = precond_coeffs(sd, sd).unwrap();
        assert!((c.c_skip - 0.5).abs() < 1e-15);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let sigma = rng.gen_range(0.002..80.0);
            let c = precond_coeffs(sigma, sd).unwrap();
            let id = c.c_in * c.c_in * (sigma * sigma + sd * sd);
            assert!((id - 1.0).abs() <= 1e-12);
        }
        assert!(precond_coeffs(0.0, 1.0).is_err());
        assert!(precond_coeffs(-1.0, 1.0).is_err());
    }

    #[test]
    fn denoised_tends_to_input_as_sigma_vanishes() {
        let net = tiny_net(2, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-2.0..2.0));
        let d = precondition(&net, &x, 1e-6, 1.0).unwrap();
        let max = d.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max < 1e-4, "max deviation {max}");
    }

    #[test]
    fn objective_zero_for_perfect_denoiser_and_matches_scalar_oracle() {
        let schedule = NoiseSchedule::default();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let z = Array2::from_shape_fn((5, 3), |_| rng.gen_range(-1.0..1.0));
        let sigmas = Array1::from_shape_fn(5, |_| rng.gen_range(0.01..10.0));
        assert_eq!(weighted_denoise_objective(&z, &z.clone(), &sigmas, &schedule), 0.0);

        // scalar reimplementation for one fixed draw
        let net = tiny_net(5, 3);
        let x = &z + &Array2::from_shape_fn((5, 3), |_| rng.gen_range(-1.0..1.0));
        let (denoised, _, _) = precondition_with_cache(&net, &x, &sigmas, 1.0).unwrap();
        let api = weighted_denoise_objective(&z, &denoised, &sigmas, &schedule);
        let mut by_hand = 0.0;
        for b in 0..5 {
            let s = sigmas[b];
            let w = (s * s + 1.0) / (s * s);
            let mut err = 0.0;
            for d in 0..3 {
                let e = denoised[[b, d]] - z[[b, d]];
                err += e * e;
            }
            by_hand += w * err;
        }
        by_hand /= 5.0;
        assert!((api - by_hand).abs() < 1e-10);
    }

    #[test]
    fn denoise_loss_deterministic_for_fixed_seed() {
        let net = tiny_net(6, 4);
        let schedule = NoiseSchedule::default();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let z = Array2::from_shape_fn((8, 4), |_| rng.gen_range(-1.0..1.0));
        let a = denoise_loss(&net, &z, &schedule, 99).unwrap();
        let b = denoise_loss(&net, &z, &schedule, 99).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        let c = denoise_loss(&net, &z, &schedule, 100).unwrap();
        assert_ne!(a.loss.to_bits(), c.loss.to_bits());
    }

    #[test]
    fn sigma_grid_endpoints_monotone_and_rho_one_linear() {
        let schedule = NoiseSchedule::default();
        let g = sigma_grid(&schedule, 50).unwrap();
        assert_eq!(g.len(), 51);
        assert_eq!(g[0], schedule.sigma_max);
        assert!((g[49] - schedule.sigma_min).abs() < 1e-12);
        assert_eq!(g[50], 0.0);
        for w in g.windows(2) {
            assert!(w[0] > w[1], "not strictly decreasing: {w:?}");
        }
        let linear = NoiseSchedule {
            rho: 1.0,
            ..NoiseSchedule::default()
        };
        let g = sigma_grid(&linear, 5).unwrap();
        let step = (linear.sigma_max - linear.sigma_min) / 4.0;
        for i in 0..5 {
            let expect = linear.sigma_max - step * i as f64;
            assert!((g[i] - expect).abs() < 1e-9);
        }
    }

    struct ZeroDenoiser;
    impl Denoiser for ZeroDenoiser {
        fn denoise(&self, x: &Array2<f64>, _sigma: f64) -> Array2<f64> {
            Array2::zeros(x.raw_dim())
        }
    }

    #[test]
    fn zero_denoiser_contracts_along_the_closed_form_ode() {
        // With D == 0 the probability-flow ODE is linear and the exact
        // update is x_{i+1} = x_i * sigma_{i+1} / sigma_i (also exact for the
        // Heun correction). Verify the whole trajectory against that oracle.
        let schedule = NoiseSchedule::default();
        let cfg = SamplerConfig {
            s_churn: 0.0,
            n_steps: 50,
            seed: 5,
            ..Default::default()
        };
        let (x, trace) = sample_with_trace(&ZeroDenoiser, 16, 2, &schedule, &cfg).unwrap();
        assert!(x.iter().all(|&v| v == 0.0), "final state must hit exactly 0");
        let grid = sigma_grid(&schedule, 50).unwrap();
        // initial mean norm implied by trace[0]: x0 scaled by sigma_1/sigma_0
        let implied_x0 = trace[0].mean_norm * grid[0] / grid[1];
        for t in &trace[..trace.len() - 1] {
            let expect = implied_x0 * t.sigma / grid[0];
            assert!(
                (t.mean_norm - expect).abs() <= 1e-9 * expect.max(1.0),
                "step {}: {} vs {}",
                t.step,
                t.mean_norm,
                expect
            );
        }
        assert!(trace[trace.len() - 2].mean_norm < schedule.sigma_min * implied_x0);
    }

    #[test]
    fn sampler_is_deterministic_and_empty_batch_works() {
        let schedule = NoiseSchedule::default();
        let cfg = SamplerConfig {
            seed: 11,
            ..Default::default()
        };
        let a = sample(&ZeroDenoiser, 4, 3, &schedule, &cfg).unwrap();
        let b = sample(&ZeroDenoiser, 4, 3, &schedule, &cfg).unwrap();
        assert_eq!(a, b);
        let empty = sample(&ZeroDenoiser, 0, 3, &schedule, &cfg).unwrap();
        assert_eq!(empty.dim(), (0, 3));
    }

    struct AnalyticUnitNormal;
    impl Denoiser for AnalyticUnitNormal {
        // Exact posterior mean for z ~ N(0, 1), x = z + sigma * eps.
        fn denoise(&self, x: &Array2<f64>, sigma: f64) -> Array2<f64> {
            x.mapv(|v| v / (1.0 + sigma * sigma))
        }
    }

    #[test]
    fn analytic_denoiser_yields_standard_normal_samples() {
        let schedule = NoiseSchedule::default();
        let cfg = SamplerConfig {
            s_churn: 0.0,
            n_steps: 50,
            seed: 17,
            ..Default::default()
        };
        let x = sample(&AnalyticUnitNormal, 10_000, 1, &schedule, &cfg).unwrap();
        let n = x.nrows() as f64;
        let mean = x.sum() / n;
        let std = (x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 0.05, "mean {mean}");
        assert!((std - 1.0).abs() <= 0.05, "std {std}");
    }

    #[test]
    fn churn_changes_outputs_but_stays_finite() {
        let schedule = NoiseSchedule::default();
        let plain = SamplerConfig {
            s_churn: 0.0,
            seed: 19,
            ..Default::default()
        };
        let churned = SamplerConfig {
            s_churn: 3.0,
            s_noise: 1.2,
            seed: 19,
            ..Default::default()
        };
        let a = sample(&AnalyticUnitNormal, 32, 2, &schedule, &plain).unwrap();
        let b = sample(&AnalyticUnitNormal, 32, 2, &schedule, &churned).unwrap();
        assert_ne!(a, b);
        assert!(b.iter().all(|v| v.is_finite()));
        assert_eq!(b.dim(), (32, 2));
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let mut net = tiny_net(23, 3);
        let schedule = NoiseSchedule::default();
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let z = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let noise_seed = 31;

        let state = denoise_loss(&net, &z, &schedule, noise_seed).unwrap();
        net.zero_grads();
        denoise_loss_backward(&mut net, &state);
        let analytic: Vec<Vec<f64>> = net
            .params_mut()
            .iter()
            .map(|p| p.grad.iter().copied().collect())
            .collect();

        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for pi in 0..analytic.len() {
            let len = net.params_mut()[pi].len();
            for k in 0..len {
                let orig = net.params_mut()[pi].value.as_slice_mut().unwrap()[k];
                net.params_mut()[pi].value.as_slice_mut().unwrap()[k] = orig + h;
                let lp = denoise_loss(&net, &z, &schedule, noise_seed).unwrap().loss;
                net.params_mut()[pi].value.as_slice_mut().unwrap()[k] = orig - h;
                let lm = denoise_loss(&net, &z, &schedule, noise_seed).unwrap().loss;
                net.params_mut()[pi].value.as_slice_mut().unwrap()[k] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = analytic[pi][k];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-4);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel <= 1e-3, "max rel grad error {max_rel}");
    }

    #[test]
    fn point_mass_training_reduces_loss() {
        let z = Array2::zeros((64, 4));
        let schedule = NoiseSchedule::default();
        let cfg = DiffusionTrainConfig {
            steps: 400,
            lr: 1e-3,
            weight_decay: 0.0,
            batch: 64,
            hidden: vec![32, 32, 16],
            emb_dim: 8,
        };
        let (_, log) = fit_diffusion(&z, &schedule, &cfg, 37).unwrap();
        assert_eq!(log.len(), 400);
        let first: f64 = log[..20].iter().map(|l| l.loss).sum::<f64>() / 20.0;
        let last: f64 = log[380..].iter().map(|l| l.loss).sum::<f64>() / 20.0;
        assert!(
            last < 0.05 * first,
            "insufficient training: first {first}, last {last}"
        );
    }

    #[test]
    fn fit_diffusion_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let z = Array2::from_shape_fn((32, 3), |_| rng.gen_range(-1.0..1.0));
        let schedule = NoiseSchedule::default();
        let cfg = DiffusionTrainConfig {
            steps: 30,
            batch: 16,
            hidden: vec![8, 8, 4],
            emb_dim: 4,
            ..Default::default()
        };
        let (_, log1) = fit_diffusion(&z, &schedule, &cfg, 43).unwrap();
        let (_, log2) = fit_diffusion(&z, &schedule, &cfg, 43).unwrap();
        for (a, b) in log1.iter().zip(&log2) {
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        }
    }
}
