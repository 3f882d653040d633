//! Conditional denoising diffusion over standardized return windows.
//!
//! Linear beta schedule, closed-form forward corruption, noise-prediction
//! training, and ancestral sampling conditioned on a scalar crash
//! intensity. The noise net is a plain MLP fed the flattened window, a
//! 16-dim sinusoidal timestep embedding, and the intensity scalar.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{StandardizationStats, WindowSample};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, Gradients, Mlp, MlpCheckpoint};

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;
pub const TIME_EMBED_DIM: usize = 16;
pub const DDPM_FORMAT_VERSION: u32 = 1;

/// An L×N window of standardized returns, row-major.
pub type Window = Vec<Vec<f64>>;

/// Per-step noise levels and the derived quantities the forward and
/// reverse processes need. `t` is 1-based in every accessor.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    tilde_betas: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear schedule from [`BETA_START`] to [`BETA_END`] over `t_count`
    /// steps. With a single step the schedule is just the start value.
    pub fn linear(t_count: usize) -> Result<Self> {
        if t_count == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        let betas: Vec<f64> = (0..t_count)
            .map(|i| {
                if t_count == 1 {
                    BETA_START
                } else {
                    BETA_START + (i as f64 / (t_count as f64 - 1.0)) * (BETA_END - BETA_START)
                }
            })
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(t_count);
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        // Posterior variance; alpha_bar[0] == 1 by convention, so the first
        // entry is exactly zero.
        let tilde_betas: Vec<f64> = (0..t_count)
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                betas[i] * (1.0 - prev) / (1.0 - alpha_bars[i])
            })
            .collect();
        Ok(NoiseSchedule {
            betas,
            alphas,
            alpha_bars,
            tilde_betas,
        })
    }

    pub fn t_count(&self) -> usize {
        self.betas.len()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_count() {
            return Err(Error::InvalidArgument(format!(
                "step {t} outside 1..={}",
                self.t_count()
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    pub fn tilde_beta(&self, t: usize) -> f64 {
        self.tilde_betas[t - 1]
    }
}

/// Sinusoidal embedding of an (absolute, 1-based) timestep.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(i as f64) * (10_000.0f64).ln() / (half as f64 - 1.0)).exp();
        out[i] = (t as f64 * freq).sin();
        out[half + i] = (t as f64 * freq).cos();
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Diffusion step count; 100 keeps sampling fast at window scale.
    pub t_count: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            t_count: 100,
            hidden: vec![128, 128],
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub dataset_hash: String,
}

/// The trained generator: noise net, schedule, window shape, and the
/// standardization stats needed to map samples back to return space.
#[derive(Debug, Clone)]
pub struct DdpmModel {
    net: Mlp,
    schedule: NoiseSchedule,
    window_len: usize,
    n_assets: usize,
    stats: StandardizationStats,
    meta: TrainMeta,
}

impl DdpmModel {
    pub fn new(
        net: Mlp,
        schedule: NoiseSchedule,
        window_len: usize,
        n_assets: usize,
        stats: StandardizationStats,
        meta: TrainMeta,
    ) -> Result<Self> {
        let dim = window_len * n_assets;
        if net.input_dim() != dim + TIME_EMBED_DIM + 1 || net.output_dim() != dim {
            return Err(Error::Dimension(format!(
                "noise net must map {} -> {dim}, got {} -> {}",
                dim + TIME_EMBED_DIM + 1,
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(DdpmModel {
            net,
            schedule,
            window_len,
            n_assets,
            stats,
            meta,
        })
    }

    /// Fresh, untrained model with Glorot-initialized noise net.
    pub fn init(
        window_len: usize,
        n_assets: usize,
        cfg: &DiffusionConfig,
        stats: StandardizationStats,
        seed: u64,
    ) -> Result<Self> {
        let dim = window_len * n_assets;
        let mut sizes = vec![dim + TIME_EMBED_DIM + 1];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(dim);
        let mut net = Mlp::init(&sizes, Activation::Tanh, seed)?;
        // Fresh noise predictors start at exactly zero output; the first
        // optimizer step brings the output layer to life.
        net.zero_output_layer();
        let schedule = NoiseSchedule::linear(cfg.t_count)?;
        DdpmModel::new(
            net,
            schedule,
            window_len,
            n_assets,
            stats,
            TrainMeta {
                seed,
                epochs: 0,
                dataset_hash: String::new(),
            },
        )
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn stats(&self) -> &StandardizationStats {
        &self.stats
    }

    pub fn meta(&self) -> &TrainMeta {
        &self.meta
    }

    pub fn flat_dim(&self) -> usize {
        self.window_len * self.n_assets
    }

    /// ε̂(x_t, t, c) on a flattened window.
    pub fn predict_noise(&self, x_flat: &[f64], t: usize, c: f64) -> Result<Vec<f64>> {
        self.net.output(&self.assemble_input(x_flat, t, c))
    }

    fn assemble_input(&self, x_flat: &[f64], t: usize, c: f64) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.net.input_dim());
        input.extend_from_slice(x_flat);
        input.extend_from_slice(&time_embedding(t, TIME_EMBED_DIM));
        input.push(c);
        input
    }

    pub fn to_checkpoint(&self) -> DdpmCheckpoint {
        DdpmCheckpoint {
            format_version: DDPM_FORMAT_VERSION,
            net: self.net.to_checkpoint(self.meta.seed),
            t_count: self.schedule.t_count(),
            beta_start: BETA_START,
            beta_end: BETA_END,
            window_len: self.window_len,
            n_assets: self.n_assets,
            stats: self.stats.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &DdpmCheckpoint) -> Result<Self> {
        if ckpt.format_version != DDPM_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported ddpm checkpoint version {}",
                ckpt.format_version
            )));
        }
        if ckpt.beta_start != BETA_START || ckpt.beta_end != BETA_END {
            return Err(Error::Checkpoint(
                "checkpoint schedule endpoints do not match this build".into(),
            ));
        }
        DdpmModel::new(
            Mlp::from_checkpoint(&ckpt.net)?,
            NoiseSchedule::linear(ckpt.t_count)?,
            ckpt.window_len,
            ckpt.n_assets,
            ckpt.stats.clone(),
            ckpt.meta.clone(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DdpmCheckpoint {
    pub format_version: u32,
    pub net: MlpCheckpoint,
    pub t_count: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub window_len: usize,
    pub n_assets: usize,
    pub stats: StandardizationStats,
    pub meta: TrainMeta,
}

pub fn flatten(window: &[Vec<f64>]) -> Vec<f64> {
    window.iter().flatten().copied().collect()
}

pub fn unflatten(flat: &[f64], window_len: usize, n_assets: usize) -> Window {
    (0..window_len)
        .map(|r| flat[r * n_assets..(r + 1) * n_assets].to_vec())
        .collect()
}

/// Closed-form forward corruption:
/// x_t = sqrt(ᾱ_t)·x0 + sqrt(1-ᾱ_t)·ε.
pub fn forward_diffuse(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_t(t)?;
    if x0.len() != eps.len() {
        return Err(Error::Dimension(format!(
            "x0 has {} elements, eps has {}",
            x0.len(),
            eps.len()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let (s0, s1) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| s0 * x + s1 * e).collect())
}

/// One term of the simplified MSE objective: draws (t, ε) per sample,
/// corrupts, and scores the noise prediction. Returns the batch loss and
/// accumulated parameter gradients.
pub fn training_loss(
    model: &DdpmModel,
    batch: &[WindowSample],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let dim = model.flat_dim();
    let t_count = model.schedule.t_count();
    let mut grads = Gradients::zeros_like(&model.net);
    let mut loss = 0.0;
    let norm = 1.0 / (batch.len() as f64 * dim as f64);
    for sample in batch {
        if sample.window_len() != model.window_len || sample.n_assets() != model.n_assets {
            return Err(Error::Dimension(format!(
                "window {}x{} does not match model {}x{}",
                sample.window_len(),
                sample.n_assets(),
                model.window_len,
                model.n_assets
            )));
        }
        let x0 = flatten(&sample.window);
        let t = rng.random_range(1..=t_count);
        let eps: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let x_t = forward_diffuse(&x0, t, &eps, &model.schedule)?;
        let input = model.assemble_input(&x_t, t, sample.intensity);
        let (pred, tape) = model.net.forward(&input)?;
        let mut out_grad = vec![0.0; dim];
        for i in 0..dim {
            let err = pred[i] - eps[i];
            loss += err * err * norm;
            out_grad[i] = 2.0 * err * norm;
        }
        let g = model.net.backward(&tape, &out_grad)?;
        grads.add_scaled(&g, 1.0);
    }
    Ok((loss, grads))
}

/// Adam minimization of the noise-prediction loss. Deterministic under
/// `seed`; returns the trained model and the per-epoch loss curve.
pub fn train(
    dataset: &[WindowSample],
    stats: &StandardizationStats,
    cfg: &DiffusionConfig,
    dataset_hash: &str,
    seed: u64,
) -> Result<(DdpmModel, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty diffusion dataset".into()));
    }
    let window_len = dataset[0].window_len();
    let n_assets = dataset[0].n_assets();
    if dataset
        .iter()
        .any(|s| s.window_len() != window_len || s.n_assets() != n_assets)
    {
        return Err(Error::Dimension("inconsistent window shapes in dataset".into()));
    }
    let mut model = DdpmModel::init(window_len, n_assets, cfg, stats.clone(), seed)?;
    model.meta = TrainMeta {
        seed,
        epochs: cfg.epochs,
        dataset_hash: dataset_hash.to_string(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1); // stream 0 seeded the net init
    let mut opt = AdamState::new(&model.net, AdamConfig::with_lr(cfg.lr));
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<WindowSample> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let (loss, grads) = training_loss(&model, &batch, &mut rng)?;
            adam_step(&mut model.net, &grads, &mut opt)?;
            epoch_loss += loss;
            batches += 1;
        }
        let mean = epoch_loss / batches as f64;
        log::debug!("diffusion epoch {epoch}: loss {mean:.6}");
        losses.push(mean);
    }
    Ok((model, losses))
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// One ancestral step: x_{t-1} = μ_θ(x_t,t,c) + sqrt(β̃_t)·z, with the
/// noise suppressed on the final step regardless of the supplied z.
pub fn reverse_step(
    model: &DdpmModel,
    x_t: &[f64],
    t: usize,
    c: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    model.schedule.check_t(t)?;
    if x_t.len() != model.flat_dim() || z.len() != model.flat_dim() {
        return Err(Error::Dimension("reverse step shape mismatch".into()));
    }
    let eps_hat = model.predict_noise(x_t, t, c)?;
    let beta = model.schedule.beta(t);
    let alpha = model.schedule.alpha(t);
    let ab = model.schedule.alpha_bar(t);
    let coeff = beta / (1.0 - ab).sqrt();
    let sigma = if t == 1 {
        0.0
    } else {
        model.schedule.tilde_beta(t).sqrt()
    };
    Ok(x_t
        .iter()
        .zip(&eps_hat)
        .zip(z)
        .map(|((x, e), zi)| (x - coeff * e) / alpha.sqrt() + sigma * zi)
        .collect())
}

/// Ancestral sampling from x_T ~ N(0,I). Each sample owns its own
/// counter-derived random stream, so batches are order-independent and
/// bitwise reproducible under `seed`.
pub fn sample(model: &DdpmModel, count: usize, c: f64, seed: u64) -> Result<Vec<Window>> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidArgument(format!(
            "intensity {c} outside [0, 1]"
        )));
    }
    let dim = model.flat_dim();
    let t_count = model.schedule.t_count();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for t in (1..=t_count).rev() {
            let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            x = reverse_step(model, &x, t, c, &z)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "reverse diffusion at step t={t} for sample {k}"
                )));
            }
        }
        out.push(unflatten(&x, model.window_len, model.n_assets));
    }
    Ok(out)
}

/// Clip bounds for destandardized synthetic returns; keeps reconstructed
/// prices strictly positive.
pub const SYNTHETIC_RETURN_MIN: f64 = -0.5;
pub const SYNTHETIC_RETURN_MAX: f64 = 1.0;

/// Destandardizes a sampled window to returns, clips them, and compounds
/// from `base_prices` into an L×N price path.
pub fn synthetic_to_prices(
    window: &[Vec<f64>],
    stats: &StandardizationStats,
    base_prices: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = stats.n_assets();
    if base_prices.len() != n {
        return Err(Error::Dimension(format!(
            "{} base prices for {} assets",
            base_prices.len(),
            n
        )));
    }
    if base_prices.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidArgument("base prices must be positive".into()));
    }
    let mut last = base_prices.to_vec();
    let mut out = Vec::with_capacity(window.len());
    for row in window {
        if row.len() != n {
            return Err(Error::Dimension("window row width mismatch".into()));
        }
        let mut prices = Vec::with_capacity(n);
        for (i, &z) in row.iter().enumerate() {
            let r = stats
                .destandardize(z, i)
                .clamp(SYNTHETIC_RETURN_MIN, SYNTHETIC_RETURN_MAX);
            prices.push(last[i] * (1.0 + r));
        }
        last = prices.clone();
        out.push(prices);
    }
    Ok(out)
}
