//! PPO over the portfolio environment: diagonal-Gaussian policy on raw
//! (pre-softmax) action vectors, value baseline, generalized advantage
//! estimation, and the clipped surrogate update with KL early stopping.
//!
//! Everything is single-threaded and seed-deterministic: one random
//! stream drives action sampling, a second drives minibatch shuffling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{project_to_simplex, Observation, PortfolioEnv};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, Activation, AdamConfig, AdamState, AdamVec, Gradients, Mlp, MlpCheckpoint,
};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
pub const AGENT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub horizon: usize,
    /// Epoch loop stops early once the approximate KL passes this.
    pub kl_limit: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 10,
            minibatch: 64,
            lr: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            horizon: 512,
            kl_limit: 0.02,
            hidden: vec![64, 64],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::InvalidArgument("clip must be in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(
                "gamma and lambda must be in [0, 1]".into(),
            ));
        }
        if self.horizon == 0 || self.minibatch == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("zero-sized update configuration".into()));
        }
        Ok(())
    }
}

/// Gaussian policy: state-dependent mean, state-independent log-std.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
}

impl PolicyParams {
    pub fn init(obs_dim: usize, n_actions: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_actions);
        Ok(PolicyParams {
            mean_net: Mlp::init(&sizes, Activation::Tanh, seed)?,
            log_std: vec![0.0; n_actions],
        })
    }

    pub fn n_actions(&self) -> usize {
        self.log_std.len()
    }

    pub fn clamp_log_std(&mut self) {
        for s in &mut self.log_std {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValueParams {
    pub net: Mlp,
}

impl ValueParams {
    pub fn init(obs_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(ValueParams {
            net: Mlp::init(&sizes, Activation::Tanh, seed)?,
        })
    }

    pub fn estimate(&self, obs: &Observation) -> Result<f64> {
        Ok(self.net.output(obs.as_slice())?[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

/// Exact diagonal-Gaussian log density of `a` under (mu, exp(log_std)).
pub fn gaussian_log_prob(a: &[f64], mu: &[f64], log_std: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mut acc = -0.5 * n * (2.0 * std::f64::consts::PI).ln();
    for i in 0..a.len() {
        let sigma = log_std[i].exp();
        let z = (a[i] - mu[i]) / sigma;
        acc -= log_std[i] + 0.5 * z * z;
    }
    acc
}

/// Draws a raw action and its log probability. Deterministic mode returns
/// the mean (and its density).
pub fn act(
    policy: &PolicyParams,
    obs: &Observation,
    mode: ActMode,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, f64)> {
    let mu = policy.mean_net.output(obs.as_slice())?;
    let raw = match mode {
        ActMode::Deterministic => mu.clone(),
        ActMode::Stochastic => mu
            .iter()
            .zip(&policy.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect(),
    };
    let lp = gaussian_log_prob(&raw, &mu, &policy.log_std);
    Ok((raw, lp))
}

/// GAE(γ, λ): δ_t = r_t + γV_{t+1}(1-done_t) - V_t;
/// A_t = δ_t + γλ(1-done_t)A_{t+1}; returns = A + V.
/// `bootstrap_value` stands in for V past the horizon (0 when the last
/// transition ended its episode).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "misaligned gae inputs");
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * next_v * not_done - values[t];
        acc = delta + gamma * lambda * not_done * acc;
        advantages[t] = acc;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// One rollout's worth of experience plus the GAE outputs.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.raw_actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    /// GAE plus batch-level advantage normalization (mean 0, std 1).
    pub fn finalize(&mut self, bootstrap_value: f64, gamma: f64, lambda: f64) {
        let (adv, ret) = compute_gae(
            &self.rewards,
            &self.values,
            &self.dones,
            bootstrap_value,
            gamma,
            lambda,
        );
        self.returns = ret;
        self.advantages = normalize_advantages(&adv);
    }
}

pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.iter().map(|a| (a - mean) / std).collect()
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub epochs_run: usize,
}

/// Optimizer bundle kept across updates.
pub struct PpoOptimizer {
    policy_opt: AdamState,
    log_std_opt: AdamVec,
    value_opt: AdamState,
}

impl PpoOptimizer {
    pub fn new(policy: &PolicyParams, value: &ValueParams, lr: f64) -> Self {
        PpoOptimizer {
            policy_opt: AdamState::new(&policy.mean_net, AdamConfig::with_lr(lr)),
            log_std_opt: AdamVec::new(policy.log_std.len(), AdamConfig::with_lr(lr)),
            value_opt: AdamState::new(&value.net, AdamConfig::with_lr(lr)),
        }
    }
}

/// Clipped-surrogate PPO update over a finalized buffer. Runs up to
/// `cfg.epochs` passes of minibatch Adam steps, stopping early when the
/// approximate KL exceeds the limit.
pub fn ppo_update(
    policy: &mut PolicyParams,
    value: &mut ValueParams,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    opt: &mut PpoOptimizer,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    cfg.validate()?;
    if buffer.is_empty() {
        return Err(Error::InvalidArgument("empty rollout buffer".into()));
    }
    if buffer.advantages.len() != buffer.len() {
        return Err(Error::InvalidArgument("buffer not finalized".into()));
    }
    let n = buffer.len();
    let mut order: Vec<usize> = (0..n).collect();

    let mut last = UpdateStats {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: entropy(&policy.log_std),
        clip_fraction: 0.0,
        approx_kl: 0.0,
        epochs_run: 0,
    };

    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_kl = 0.0;
        let mut epoch_clip = 0.0;
        let mut epoch_pol = 0.0;
        let mut epoch_val = 0.0;
        let mut minibatches = 0usize;

        for chunk in order.chunks(cfg.minibatch) {
            let m = chunk.len() as f64;
            let mut pol_grads = Gradients::zeros_like(&policy.mean_net);
            let mut log_std_grads = vec![0.0; policy.n_actions()];
            let mut val_grads = Gradients::zeros_like(&value.net);
            let mut pol_loss = 0.0;
            let mut val_loss = 0.0;
            let mut kl = 0.0;
            let mut clipped = 0usize;

            for &idx in chunk {
                let obs = &buffer.observations[idx];
                let a = &buffer.raw_actions[idx];
                let adv = buffer.advantages[idx];
                let ret = buffer.returns[idx];
                let lp_old = buffer.log_probs[idx];

                let (mu, tape) = policy.mean_net.forward(obs)?;
                let lp_new = gaussian_log_prob(a, &mu, &policy.log_std);
                let ratio = (lp_new - lp_old).exp();
                let unclipped = ratio * adv;
                let clip_ratio = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                let surrogate = unclipped.min(clip_ratio * adv);
                pol_loss -= surrogate / m;
                kl += (lp_old - lp_new) / m;
                if (ratio - 1.0).abs() > cfg.clip {
                    clipped += 1;
                }

                // Gradient flows only while the unclipped branch is active.
                if unclipped <= clip_ratio * adv {
                    let g_lp = -adv * ratio / m;
                    let mut mu_grad = vec![0.0; mu.len()];
                    for i in 0..mu.len() {
                        let sigma = policy.log_std[i].exp();
                        let z = (a[i] - mu[i]) / sigma;
                        mu_grad[i] = g_lp * z / sigma;
                        log_std_grads[i] += g_lp * (z * z - 1.0);
                    }
                    let g = policy.mean_net.backward(&tape, &mu_grad)?;
                    pol_grads.add_scaled(&g, 1.0);
                }
                // Entropy bonus only touches log_std (state-independent).
                for g in log_std_grads.iter_mut() {
                    *g -= cfg.entropy_coef / m;
                }

                let (v, vtape) = value.net.forward(obs)?;
                let err = v[0] - ret;
                val_loss += err * err / m;
                let g = value
                    .net
                    .backward(&vtape, &[cfg.value_coef * 2.0 * err / m])?;
                val_grads.add_scaled(&g, 1.0);
            }

            if !pol_grads.is_finite() || !val_grads.is_finite() {
                return Err(Error::NonFinite("ppo update gradients".into()));
            }
            adam_step(&mut policy.mean_net, &pol_grads, &mut opt.policy_opt)?;
            opt.log_std_opt.step(&mut policy.log_std, &log_std_grads)?;
            policy.clamp_log_std();
            adam_step(&mut value.net, &val_grads, &mut opt.value_opt)?;

            epoch_kl += kl;
            epoch_clip += clipped as f64 / m;
            epoch_pol += pol_loss;
            epoch_val += val_loss;
            minibatches += 1;
        }

        let mb = minibatches as f64;
        last = UpdateStats {
            policy_loss: epoch_pol / mb,
            value_loss: epoch_val / mb,
            entropy: entropy(&policy.log_std),
            clip_fraction: epoch_clip / mb,
            approx_kl: epoch_kl / mb,
            epochs_run: epoch + 1,
        };
        if !last.policy_loss.is_finite() || !last.value_loss.is_finite() {
            return Err(Error::NonFinite("ppo losses".into()));
        }
        if last.approx_kl > cfg.kl_limit {
            break;
        }
    }
    Ok(last)
}

/// Differential entropy of the diagonal Gaussian.
pub fn entropy(log_std: &[f64]) -> f64 {
    let n = log_std.len() as f64;
    log_std.iter().sum::<f64>() + 0.5 * n * (1.0 + (2.0 * std::f64::consts::PI).ln())
}

/// A ready-to-step episode: environment plus its first observation.
pub struct ActiveEpisode {
    pub env: PortfolioEnv,
    pub obs: Observation,
}

/// Yields independent episodes — real, synthetic, or mixed — to the
/// training loop.
pub trait EpisodeSource {
    fn next_episode(&mut self) -> Result<ActiveEpisode>;
}

#[derive(Debug, Clone, Serialize)]
pub struct LearningCurveRow {
    pub update: usize,
    pub mean_reward: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

/// Alternates rollout collection and PPO updates for
/// `total_steps / horizon` updates. Deterministic under `seed` with
/// single-threaded collection.
pub fn train_agent(
    source: &mut dyn EpisodeSource,
    policy: &mut PolicyParams,
    value: &mut ValueParams,
    cfg: &PpoConfig,
    total_steps: usize,
    seed: u64,
) -> Result<Vec<LearningCurveRow>> {
    cfg.validate()?;
    let n_updates = total_steps / cfg.horizon;
    let mut curve = Vec::with_capacity(n_updates);
    if n_updates == 0 {
        return Ok(curve);
    }
    let mut action_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(1);

    let mut opt = PpoOptimizer::new(policy, value, cfg.lr);
    let mut buffer = RolloutBuffer::default();
    let mut episode = source.next_episode()?;

    for update in 0..n_updates {
        buffer.clear();
        let mut ended_done = false;
        for _ in 0..cfg.horizon {
            let v = value.estimate(&episode.obs)?;
            let (raw, lp) = act(policy, &episode.obs, ActMode::Stochastic, &mut action_rng)?;
            let action = project_to_simplex(&raw);
            let step = episode.env.step(&action)?;
            buffer.observations.push(episode.obs.as_slice().to_vec());
            buffer.raw_actions.push(raw);
            buffer.log_probs.push(lp);
            buffer.rewards.push(step.reward);
            buffer.values.push(v);
            buffer.dones.push(step.done);
            ended_done = step.done;
            if step.done {
                episode = source.next_episode()?;
            } else {
                episode.obs = step.observation;
            }
        }
        let bootstrap = if ended_done {
            0.0
        } else {
            value.estimate(&episode.obs)?
        };
        buffer.finalize(bootstrap, cfg.gamma, cfg.lambda);
        let stats = ppo_update(policy, value, &buffer, cfg, &mut opt, &mut shuffle_rng)?;
        let mean_reward = buffer.rewards.iter().sum::<f64>() / buffer.len() as f64;
        log::debug!(
            "ppo update {update}: reward {mean_reward:.6}, kl {:.4}, clip {:.3}",
            stats.approx_kl,
            stats.clip_fraction
        );
        curve.push(LearningCurveRow {
            update,
            mean_reward,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
        });
    }
    Ok(curve)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format_version: u32,
    pub policy_net: MlpCheckpoint,
    pub log_std: Vec<f64>,
    pub value_net: MlpCheckpoint,
    pub config: PpoConfig,
    pub seed: u64,
}

impl AgentCheckpoint {
    pub fn capture(
        policy: &PolicyParams,
        value: &ValueParams,
        cfg: &PpoConfig,
        seed: u64,
    ) -> Self {
        AgentCheckpoint {
            format_version: AGENT_FORMAT_VERSION,
            policy_net: policy.mean_net.to_checkpoint(seed),
            log_std: policy.log_std.clone(),
            value_net: value.net.to_checkpoint(seed),
            config: cfg.clone(),
            seed,
        }
    }

    pub fn restore(&self) -> Result<(PolicyParams, ValueParams)> {
        if self.format_version != AGENT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported agent checkpoint version {}",
                self.format_version
            )));
        }
        Ok((
            PolicyParams {
                mean_net: Mlp::from_checkpoint(&self.policy_net)?,
                log_std: self.log_std.clone(),
            },
            ValueParams {
                net: Mlp::from_checkpoint(&self.value_net)?,
            },
        ))
    }
}
