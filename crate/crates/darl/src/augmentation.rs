//! The full composition: generate conditional crash scenarios with the
//! trained diffusion model and interleave them with real episodes while
//! training the PPO agent.
//!
//! A synthetic episode splices a recent stretch of real history (enough
//! for covariance and indicator lookbacks) onto a generated price
//! fragment anchored at the real closes of a seed-chosen splice day; the
//! agent then trades through the generated stretch. Spliced tables carry
//! the synthetic origin tag, so they can never reach the backtester.

use std::sync::Arc;

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    train_agent, ActiveEpisode, EpisodeSource, LearningCurveRow, PolicyParams, PpoConfig,
    ValueParams,
};
use crate::diffusion::{self, DdpmModel, DiffusionConfig};
use crate::env::{observation_dim, EnvConfig, EpisodeData, PortfolioEnv};
use crate::error::{Error, Result};
use crate::market_data::{DataOrigin, DatasetCache, PriceTable};
use crate::util::{derive_seed, seed_tag};

/// How synthetic episodes are mixed into training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPlan {
    /// Fraction of scheduled episodes that are synthetic.
    pub synthetic_fraction: f64,
    /// Crash intensities drawn uniformly per synthetic episode.
    pub intensity_menu: Vec<f64>,
    /// Distinct generation seeds kept per intensity; further episodes at
    /// the same intensity replay scenarios from this pool.
    pub scenarios_per_intensity: usize,
    /// Seed for scenario generation; derived from the global seed when
    /// absent.
    pub generation_seed: Option<u64>,
}

impl Default for AugmentationPlan {
    fn default() -> Self {
        AugmentationPlan {
            synthetic_fraction: 0.3,
            intensity_menu: vec![0.25, 0.5, 0.75, 1.0],
            scenarios_per_intensity: 8,
            generation_seed: None,
        }
    }
}

impl AugmentationPlan {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.synthetic_fraction) {
            return Err(Error::InvalidArgument(
                "synthetic fraction must be in [0, 1]".into(),
            ));
        }
        if self.synthetic_fraction > 0.0 && self.intensity_menu.is_empty() {
            return Err(Error::InvalidArgument("empty intensity menu".into()));
        }
        if self.intensity_menu.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument(
                "intensity menu values must be in [0, 1]".into(),
            ));
        }
        if self.scenarios_per_intensity == 0 {
            return Err(Error::InvalidArgument(
                "scenarios per intensity must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One scheduled episode: a real start slot or a synthetic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EpisodeSpec {
    Real { start_slot: usize },
    Synthetic { intensity: f64, seed: u64 },
}

/// Builds a shuffled schedule of `episode_count` specs with a synthetic
/// share of `round(fraction * count)`. Real slots are drawn uniformly in
/// `[0, episode_count)` and mapped onto actual start indices modulo the
/// number of legal starts by the episode source.
pub fn build_episode_schedule(
    plan: &AugmentationPlan,
    episode_count: usize,
    generation_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpisodeSpec>> {
    plan.validate()?;
    if episode_count == 0 {
        return Err(Error::InvalidArgument("episode count must be positive".into()));
    }
    let n_syn = ((plan.synthetic_fraction * episode_count as f64).round() as usize)
        .min(episode_count);
    let mut specs = Vec::with_capacity(episode_count);
    let mut per_intensity_counts = vec![0usize; plan.intensity_menu.len()];
    for _ in 0..n_syn {
        let idx = rng.random_range(0..plan.intensity_menu.len());
        let scenario = per_intensity_counts[idx] % plan.scenarios_per_intensity;
        per_intensity_counts[idx] += 1;
        let seed = derive_seed(
            generation_seed,
            1000 + (idx * plan.scenarios_per_intensity + scenario) as u64,
        );
        specs.push(EpisodeSpec::Synthetic {
            intensity: plan.intensity_menu[idx],
            seed,
        });
    }
    for _ in n_syn..episode_count {
        specs.push(EpisodeSpec::Real {
            start_slot: rng.random_range(0..episode_count),
        });
    }
    for i in (1..specs.len()).rev() {
        let j = rng.random_range(0..=i);
        specs.swap(i, j);
    }
    Ok(specs)
}

/// Samples one scenario and reconstructs it as a standalone price-path
/// fragment anchored at `base_prices`.
pub fn realize_synthetic_episode(
    model: &DdpmModel,
    intensity: f64,
    seed: u64,
    tickers: &[String],
    base_prices: &[f64],
    first_date: chrono::NaiveDate,
) -> Result<PriceTable> {
    let window = diffusion::sample(model, 1, intensity, seed)?
        .pop()
        .expect("sample(count=1) yields one window");
    let closes = diffusion::synthetic_to_prices(&window, model.stats(), base_prices)?;
    let dates = (0..closes.len())
        .map(|i| first_date + Duration::days(i as i64))
        .collect();
    PriceTable::new(dates, tickers.to_vec(), closes, DataOrigin::Synthetic)
}

/// Feeds the training loop episodes in schedule order, cycling when the
/// schedule is exhausted.
pub struct ScheduledEpisodeSource {
    real: Arc<EpisodeData>,
    env_cfg: EnvConfig,
    schedule: Vec<EpisodeSpec>,
    pos: usize,
    ddpm: Option<Arc<DdpmModel>>,
    episode_len: usize,
    min_start: usize,
    n_starts: usize,
    splice_min: usize,
}

impl ScheduledEpisodeSource {
    pub fn new(
        real: Arc<EpisodeData>,
        env_cfg: EnvConfig,
        schedule: Vec<EpisodeSpec>,
        ddpm: Option<Arc<DdpmModel>>,
        episode_len: usize,
    ) -> Result<Self> {
        if schedule.is_empty() {
            return Err(Error::InvalidArgument("empty episode schedule".into()));
        }
        let min_start = real.min_start(&env_cfg);
        let rows = real.table().n_rows();
        if min_start + 1 >= rows {
            return Err(Error::InvalidArgument(
                "price table too short for any episode".into(),
            ));
        }
        let n_starts = rows - 1 - min_start;
        // Synthetic splices need enough real prefix for indicators (30
        // rows) on top of the covariance lookback.
        let splice_min = min_start.max(30);
        let needs_synthetic = schedule
            .iter()
            .any(|s| matches!(s, EpisodeSpec::Synthetic { .. }));
        if needs_synthetic {
            if ddpm.is_none() {
                return Err(Error::InvalidArgument(
                    "schedule contains synthetic episodes but no diffusion model was supplied"
                        .into(),
                ));
            }
            if splice_min >= rows - 1 {
                return Err(Error::InvalidArgument(
                    "price table too short for synthetic splicing".into(),
                ));
            }
        }
        Ok(ScheduledEpisodeSource {
            real,
            env_cfg,
            schedule,
            pos: 0,
            ddpm,
            episode_len,
            min_start,
            n_starts,
            splice_min,
        })
    }

    fn synthetic_table(&self, intensity: f64, seed: u64) -> Result<PriceTable> {
        let model = self.ddpm.as_ref().expect("checked at construction");
        let table = self.real.table();
        let mut srng = ChaCha8Rng::seed_from_u64(derive_seed(seed, seed_tag::SPLICE));
        let splice_span = table.n_rows() - 1 - self.splice_min;
        let splice_idx = self.splice_min + srng.random_range(0..splice_span);

        let fragment = realize_synthetic_episode(
            model,
            intensity,
            seed,
            table.tickers(),
            table.row(splice_idx),
            table.dates()[splice_idx] + Duration::days(1),
        )?;

        let prefix_target = self.env_cfg.cov_lookback + self.env_cfg.obs_return_window + 60;
        let prefix_len = prefix_target.min(splice_idx);
        let from = splice_idx - prefix_len;
        let mut dates: Vec<chrono::NaiveDate> = table.dates()[from..=splice_idx].to_vec();
        let mut closes: Vec<Vec<f64>> = table.closes()[from..=splice_idx].to_vec();
        dates.extend_from_slice(fragment.dates());
        closes.extend(fragment.closes().iter().cloned());
        PriceTable::new(dates, table.tickers().to_vec(), closes, DataOrigin::Synthetic)
    }
}

impl EpisodeSource for ScheduledEpisodeSource {
    fn next_episode(&mut self) -> Result<ActiveEpisode> {
        let spec = self.schedule[self.pos % self.schedule.len()].clone();
        self.pos += 1;
        match spec {
            EpisodeSpec::Real { start_slot } => {
                let start = self.min_start + start_slot % self.n_starts;
                let (env, obs) = PortfolioEnv::reset(
                    self.real.clone(),
                    self.env_cfg.clone(),
                    start,
                    Some(self.episode_len),
                )?;
                Ok(ActiveEpisode { env, obs })
            }
            EpisodeSpec::Synthetic { intensity, seed } => {
                let model = self.ddpm.as_ref().expect("checked at construction");
                let window_len = model.window_len();
                let table = self.synthetic_table(intensity, seed)?;
                let start = table.n_rows() - 1 - window_len;
                let data = EpisodeData::prepare(table, &self.env_cfg)?;
                let (env, obs) = PortfolioEnv::reset(
                    data,
                    self.env_cfg.clone(),
                    start,
                    Some(window_len),
                )?;
                Ok(ActiveEpisode { env, obs })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DarlTrainConfig {
    pub episode_len: usize,
    pub total_steps: usize,
}

impl Default for DarlTrainConfig {
    fn default() -> Self {
        DarlTrainConfig {
            episode_len: 128,
            total_steps: 51_200,
        }
    }
}

pub struct AgentRun {
    pub policy: PolicyParams,
    pub value: ValueParams,
    pub curve: Vec<LearningCurveRow>,
    pub schedule: Vec<EpisodeSpec>,
}

pub struct DarlRun {
    pub ddpm: Option<DdpmModel>,
    pub diffusion_losses: Vec<f64>,
    pub agent: AgentRun,
}

/// Trains the PPO agent over a mixed real/synthetic episode schedule.
/// With `synthetic_fraction == 0` (or no model) this is exactly the plain
/// no-augmentation training path. Stage seeds are derived from the global
/// seed, so the diffusion stage never perturbs the agent's streams.
pub fn train_agent_on_schedule(
    cache: &DatasetCache,
    env_cfg: &EnvConfig,
    ppo_cfg: &PpoConfig,
    plan: &AugmentationPlan,
    tcfg: &DarlTrainConfig,
    ddpm: Option<Arc<DdpmModel>>,
    global_seed: u64,
) -> Result<AgentRun> {
    plan.validate()?;
    let schedule_seed = derive_seed(global_seed, seed_tag::SCHEDULE);
    let agent_seed = derive_seed(global_seed, seed_tag::AGENT);
    let generation_seed = plan
        .generation_seed
        .unwrap_or_else(|| derive_seed(global_seed, seed_tag::SAMPLING));

    let table = cache.train_table()?;
    let data = EpisodeData::prepare(table, env_cfg)?;

    let min_episode_len = match (&ddpm, plan.synthetic_fraction > 0.0) {
        (Some(model), true) => tcfg.episode_len.min(model.window_len()),
        _ => tcfg.episode_len,
    };
    let episode_count = tcfg.total_steps / min_episode_len.max(1) + 8;
    let mut schedule_rng = ChaCha8Rng::seed_from_u64(schedule_seed);
    let schedule = build_episode_schedule(plan, episode_count, generation_seed, &mut schedule_rng)?;

    let model = if plan.synthetic_fraction > 0.0 { ddpm } else { None };
    let mut source = ScheduledEpisodeSource::new(
        data.clone(),
        env_cfg.clone(),
        schedule.clone(),
        model,
        tcfg.episode_len,
    )?;

    let obs_dim = observation_dim(data.n_assets(), env_cfg);
    let mut policy = PolicyParams::init(
        obs_dim,
        data.n_assets(),
        &ppo_cfg.hidden,
        derive_seed(agent_seed, 10),
    )?;
    let mut value = ValueParams::init(obs_dim, &ppo_cfg.hidden, derive_seed(agent_seed, 11))?;
    let curve = train_agent(
        &mut source,
        &mut policy,
        &mut value,
        ppo_cfg,
        tcfg.total_steps,
        agent_seed,
    )?;
    Ok(AgentRun {
        policy,
        value,
        curve,
        schedule,
    })
}

/// The end-to-end pipeline behind one seed: label windows, train the
/// diffusion model (skipped when the plan mixes nothing in), schedule
/// episodes, train the agent.
pub fn darl_train(
    cache: &DatasetCache,
    env_cfg: &EnvConfig,
    diffusion_cfg: &DiffusionConfig,
    ppo_cfg: &PpoConfig,
    plan: &AugmentationPlan,
    tcfg: &DarlTrainConfig,
    global_seed: u64,
) -> Result<DarlRun> {
    plan.validate()?;
    let (ddpm, losses) = if plan.synthetic_fraction > 0.0 {
        let samples = cache.window_samples()?;
        let (model, losses) = diffusion::train(
            &samples,
            &cache.stats,
            diffusion_cfg,
            &cache.content_hash()?,
            derive_seed(global_seed, seed_tag::DIFFUSION),
        )?;
        (Some(model), losses)
    } else {
        (None, Vec::new())
    };
    let agent = train_agent_on_schedule(
        cache,
        env_cfg,
        ppo_cfg,
        plan,
        tcfg,
        ddpm.clone().map(Arc::new),
        global_seed,
    )?;
    Ok(DarlRun {
        ddpm,
        diffusion_losses: losses,
        agent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::PriceTable;
    use chrono::NaiveDate;

    fn toy_cache(rows: usize) -> DatasetCache {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let mut closes = vec![vec![100.0, 60.0, 30.0]];
        for i in 1..rows {
            let last = closes.last().unwrap().clone();
            let crash = (rows / 2..rows / 2 + 12).contains(&i);
            closes.push(
                (0..3)
                    .map(|a| {
                        let drift = if crash { -0.02 } else { 0.0008 };
                        let noise = 0.02 * (rng.random::<f64>() - 0.5);
                        last[a] * (1.0 + drift + noise)
                    })
                    .collect(),
            );
        }
        let table = PriceTable::new(
            (0..rows)
                .map(|i| start + chrono::Duration::days(i as i64))
                .collect(),
            vec!["AAA".into(), "BBB".into(), "CCC".into()],
            closes,
            crate::market_data::DataOrigin::Real,
        )
        .unwrap();
        DatasetCache::build(&table, vec![], 16, 4, None, "toy".into()).unwrap()
    }

    fn toy_env() -> EnvConfig {
        EnvConfig {
            cov_lookback: 20,
            obs_return_window: 4,
            ..EnvConfig::default()
        }
    }

    fn toy_ppo() -> PpoConfig {
        PpoConfig {
            horizon: 64,
            minibatch: 32,
            epochs: 2,
            hidden: vec![16],
            ..PpoConfig::default()
        }
    }

    fn toy_diffusion() -> DiffusionConfig {
        DiffusionConfig {
            t_count: 10,
            hidden: vec![32],
            epochs: 5,
            batch_size: 32,
            lr: 1e-3,
        }
    }

    #[test]
    fn schedule_counts_match_fraction() {
        let plan = AugmentationPlan::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let specs = build_episode_schedule(&plan, 100, 9, &mut rng).unwrap();
        assert_eq!(specs.len(), 100);
        let syn = specs
            .iter()
            .filter(|s| matches!(s, EpisodeSpec::Synthetic { .. }))
            .count();
        assert!((29..=31).contains(&syn), "synthetic count {syn}");
    }

    #[test]
    fn zero_fraction_is_all_real() {
        let plan = AugmentationPlan {
            synthetic_fraction: 0.0,
            ..AugmentationPlan::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let specs = build_episode_schedule(&plan, 50, 9, &mut rng).unwrap();
        assert!(specs.iter().all(|s| matches!(s, EpisodeSpec::Real { .. })));
    }

    #[test]
    fn full_fraction_single_intensity() {
        let plan = AugmentationPlan {
            synthetic_fraction: 1.0,
            intensity_menu: vec![1.0],
            ..AugmentationPlan::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let specs = build_episode_schedule(&plan, 20, 9, &mut rng).unwrap();
        assert!(specs
            .iter()
            .all(|s| matches!(s, EpisodeSpec::Synthetic { intensity, .. } if *intensity == 1.0)));
    }

    #[test]
    fn scenario_pool_bounds_distinct_seeds() {
        let plan = AugmentationPlan {
            synthetic_fraction: 1.0,
            intensity_menu: vec![0.5],
            scenarios_per_intensity: 3,
            ..AugmentationPlan::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let specs = build_episode_schedule(&plan, 30, 9, &mut rng).unwrap();
        let mut seeds: Vec<u64> = specs
            .iter()
            .map(|s| match s {
                EpisodeSpec::Synthetic { seed, .. } => *seed,
                _ => unreachable!(),
            })
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 3);
    }

    #[test]
    fn schedule_is_deterministic() {
        let plan = AugmentationPlan::default();
        let a = build_episode_schedule(&plan, 40, 9, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = build_episode_schedule(&plan, 40, 9, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn realized_fragment_is_deterministic_and_positive() {
        let cache = toy_cache(160);
        let samples = cache.window_samples().unwrap();
        let (model, _) =
            diffusion::train(&samples, &cache.stats, &toy_diffusion(), "h", 3).unwrap();
        let tickers = cache.tickers.clone();
        let base = vec![100.0, 60.0, 30.0];
        let date = NaiveDate::from_ymd_opt(2021, 6, 1).unwrap();
        let a = realize_synthetic_episode(&model, 1.0, 7, &tickers, &base, date).unwrap();
        let b = realize_synthetic_episode(&model, 1.0, 7, &tickers, &base, date).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_rows(), 16);
        assert_eq!(a.origin(), crate::market_data::DataOrigin::Synthetic);
        assert!(a.closes().iter().all(|row| row.iter().all(|p| *p > 0.0)));
    }

    #[test]
    fn synthetic_episodes_step_through_generated_prices() {
        let cache = toy_cache(160);
        let samples = cache.window_samples().unwrap();
        let (model, _) =
            diffusion::train(&samples, &cache.stats, &toy_diffusion(), "h", 3).unwrap();
        let env_cfg = toy_env();
        let data = EpisodeData::prepare(cache.train_table().unwrap(), &env_cfg).unwrap();
        let schedule = vec![EpisodeSpec::Synthetic {
            intensity: 0.75,
            seed: 99,
        }];
        let mut source = ScheduledEpisodeSource::new(
            data,
            env_cfg,
            schedule,
            Some(Arc::new(model)),
            64,
        )
        .unwrap();
        let mut ep = source.next_episode().unwrap();
        let mut steps = 0;
        loop {
            let step = ep.env.step(&crate::env::ActionWeights::equal(3)).unwrap();
            steps += 1;
            if step.done {
                break;
            }
        }
        assert_eq!(steps, 16); // the generated window length
    }

    #[test]
    fn ablation_fraction_zero_matches_plain_training() {
        let cache = toy_cache(160);
        let env_cfg = toy_env();
        let ppo = toy_ppo();
        let plan = AugmentationPlan {
            synthetic_fraction: 0.0,
            ..AugmentationPlan::default()
        };
        let tcfg = DarlTrainConfig {
            episode_len: 32,
            total_steps: 128,
        };
        let darl = darl_train(
            &cache,
            &env_cfg,
            &toy_diffusion(),
            &ppo,
            &plan,
            &tcfg,
            2024,
        )
        .unwrap();
        let plain =
            train_agent_on_schedule(&cache, &env_cfg, &ppo, &plan, &tcfg, None, 2024).unwrap();
        assert!(darl.ddpm.is_none());
        assert_eq!(
            darl.agent.policy.mean_net.flat_params(),
            plain.policy.mean_net.flat_params()
        );
        assert_eq!(
            darl.agent.value.net.flat_params(),
            plain.value.net.flat_params()
        );
        assert_eq!(darl.agent.schedule, plain.schedule);
    }

    #[test]
    fn full_pipeline_smoke_runs_and_is_deterministic() {
        let cache = toy_cache(160);
        let env_cfg = toy_env();
        let ppo = toy_ppo();
        let plan = AugmentationPlan {
            scenarios_per_intensity: 2,
            ..AugmentationPlan::default()
        };
        let tcfg = DarlTrainConfig {
            episode_len: 32,
            total_steps: 192,
        };
        let run = |seed| {
            darl_train(
                &cache,
                &env_cfg,
                &toy_diffusion(),
                &ppo,
                &plan,
                &tcfg,
                seed,
            )
            .unwrap()
        };
        let a = run(7);
        let b = run(7);
        assert!(a.ddpm.is_some());
        assert!(!a.diffusion_losses.is_empty());
        assert!(!a.agent.curve.is_empty());
        assert_eq!(
            a.agent.policy.mean_net.flat_params(),
            b.agent.policy.mean_net.flat_params()
        );
        let syn = a
            .agent
            .schedule
            .iter()
            .filter(|s| matches!(s, EpisodeSpec::Synthetic { .. }))
            .count();
        assert!(syn > 0);
    }
}
