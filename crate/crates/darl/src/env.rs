//! Portfolio MDP: observation assembly, softmax action projection, and
//! wealth accounting with proportional transaction costs.
//!
//! Observation layout, in order: the last `obs_return_window` return rows
//! (flattened), the upper triangle of the trailing covariance matrix, the
//! current indicators, and the current portfolio weights. Indicators enter
//! scaled to O(1) — MACD divided by the close, RSI/CCI/ADX divided by 100
//! — so the tanh policy nets see sane magnitudes; the raw
//! [`IndicatorSet`] values are unchanged.
//!
//! Trades execute at the same close the observation is formed from; the
//! reward is the portfolio return realized over the following day.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{
    compute_indicators, compute_returns, rolling_covariance, CovarianceMatrix, IndicatorSet,
    PriceTable, ReturnMatrix,
};

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    pub initial_capital: f64,
    /// Fraction of traded notional charged per rebalance.
    pub cost_rate: f64,
    pub cov_lookback: usize,
    pub obs_return_window: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            initial_capital: 1_000_000.0,
            cost_rate: 0.0005,
            cov_lookback: 60,
            obs_return_window: 8,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_capital > 0.0) {
            return Err(Error::InvalidArgument("initial capital must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.cost_rate) {
            return Err(Error::InvalidArgument("cost rate must be in [0, 1)".into()));
        }
        if self.cov_lookback < 2 || self.obs_return_window == 0 {
            return Err(Error::InvalidArgument("bad lookback configuration".into()));
        }
        Ok(())
    }
}

/// Simplex portfolio weights: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionWeights(Vec<f64>);

impl ActionWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(ActionWeights(w))
    }

    pub fn equal(n: usize) -> Self {
        ActionWeights(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Stable softmax onto the simplex; max subtraction keeps huge raw
/// activations from overflowing.
pub fn project_to_simplex(raw: &[f64]) -> ActionWeights {
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ActionWeights(exps.iter().map(|e| e / sum).collect())
}

/// MDP state vector; fixed dimension for a given asset count.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        Observation(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub fn observation_dim(n_assets: usize, cfg: &EnvConfig) -> usize {
    cfg.obs_return_window * n_assets + n_assets * (n_assets + 1) / 2 + 4 * n_assets + n_assets
}

/// Precomputed views over one price table: returns, rolling covariances,
/// and indicators. Shared read-only across episodes.
#[derive(Debug)]
pub struct EpisodeData {
    table: PriceTable,
    returns: ReturnMatrix,
    covariances: Vec<CovarianceMatrix>,
    indicators: IndicatorSet,
    cov_lookback: usize,
}

impl EpisodeData {
    pub fn prepare(table: PriceTable, cfg: &EnvConfig) -> Result<Arc<Self>> {
        cfg.validate()?;
        let returns = compute_returns(&table);
        if returns.n_rows() < cfg.cov_lookback {
            return Err(Error::InvalidArgument(format!(
                "{} return rows cannot support covariance lookback {}",
                returns.n_rows(),
                cfg.cov_lookback
            )));
        }
        let covariances = rolling_covariance(&returns, cfg.cov_lookback)?;
        let indicators = compute_indicators(&table)?;
        Ok(Arc::new(EpisodeData {
            table,
            returns,
            covariances,
            indicators,
            cov_lookback: cfg.cov_lookback,
        }))
    }

    pub fn table(&self) -> &PriceTable {
        &self.table
    }

    pub fn returns(&self) -> &ReturnMatrix {
        &self.returns
    }

    pub fn indicators(&self) -> &IndicatorSet {
        &self.indicators
    }

    /// Covariance over the `cov_lookback` return rows ending at return row
    /// `price_idx - 1`, i.e. using data up to and including `price_idx`.
    pub fn covariance_at(&self, price_idx: usize) -> Option<&CovarianceMatrix> {
        price_idx
            .checked_sub(self.cov_lookback)
            .and_then(|k| self.covariances.get(k))
    }

    /// Earliest price index with full covariance and return history.
    pub fn min_start(&self, cfg: &EnvConfig) -> usize {
        cfg.cov_lookback.max(cfg.obs_return_window)
    }

    pub fn n_assets(&self) -> usize {
        self.table.n_assets()
    }

    /// Observation at `price_idx` given current holdings; pure function of
    /// data rows `<= price_idx`.
    pub fn observation(
        &self,
        price_idx: usize,
        weights: &[f64],
        cfg: &EnvConfig,
    ) -> Result<Observation> {
        let n = self.n_assets();
        if weights.len() != n {
            return Err(Error::Dimension("weights length != asset count".into()));
        }
        if price_idx < self.min_start(cfg) || price_idx >= self.table.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "observation index {price_idx} outside [{}, {})",
                self.min_start(cfg),
                self.table.n_rows()
            )));
        }
        let mut obs = Vec::with_capacity(observation_dim(n, cfg));
        // Return rows t-w .. t-1 describe the last w closed days.
        for r in price_idx - cfg.obs_return_window..price_idx {
            obs.extend_from_slice(self.returns.row(r));
        }
        let cov = self
            .covariance_at(price_idx)
            .ok_or_else(|| Error::InvalidArgument("no covariance at start".into()))?;
        obs.extend_from_slice(&cov.upper_triangle());
        for asset in 0..n {
            let [macd, rsi, cci, adx] = self.indicators.at(price_idx, asset);
            let close = self.table.close(price_idx, asset);
            obs.push(macd / close);
            obs.push(rsi / 100.0);
            obs.push(cci / 100.0);
            obs.push(adx / 100.0);
        }
        obs.extend_from_slice(weights);
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation".into()));
        }
        Ok(Observation(obs))
    }
}

/// One settled rebalance-and-hold day.
#[derive(Debug, Clone, Copy)]
pub struct Settlement {
    pub turnover: f64,
    pub cost: f64,
    pub next_value: f64,
    pub reward: f64,
}

/// The shared cost engine: turnover against drifted holdings, cost on
/// traded notional, growth at the next day's returns.
///
/// `V' = (V - cost_rate·V·turnover) · (1 + w·r)`.
pub fn settle_rebalance(
    value: f64,
    drifted: &[f64],
    target: &[f64],
    next_returns: &[f64],
    cost_rate: f64,
) -> Settlement {
    let turnover: f64 = target
        .iter()
        .zip(drifted)
        .map(|(w, d)| (w - d).abs())
        .sum();
    let cost = cost_rate * value * turnover;
    let growth: f64 =
        1.0 + target.iter().zip(next_returns).map(|(w, r)| w * r).sum::<f64>();
    let next_value = (value - cost) * growth;
    Settlement {
        turnover,
        cost,
        next_value,
        reward: next_value / value - 1.0,
    }
}

/// Holdings after one day of market drift, renormalized to the simplex.
pub fn drift_weights(weights: &[f64], returns: &[f64]) -> Vec<f64> {
    let grown: Vec<f64> = weights
        .iter()
        .zip(returns)
        .map(|(w, r)| w * (1.0 + r))
        .collect();
    let sum: f64 = grown.iter().sum();
    grown.iter().map(|g| g / sum).collect()
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub portfolio_value: f64,
    pub turnover: f64,
    pub cost: f64,
    pub date_index: usize,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A single episode over a slice of a price table. Instances are
/// single-threaded; run many in parallel on separate data views if needed.
#[derive(Debug, Clone)]
pub struct PortfolioEnv {
    data: Arc<EpisodeData>,
    cfg: EnvConfig,
    t: usize,
    end: usize,
    value: f64,
    weights: Vec<f64>,
    last_returns_row: Option<usize>,
    done: bool,
}

impl PortfolioEnv {
    /// Starts an episode at `start_idx`, running for at most `max_steps`
    /// days (bounded by the table). Requires full lookback history behind
    /// the start and at least one tradable day ahead.
    pub fn reset(
        data: Arc<EpisodeData>,
        cfg: EnvConfig,
        start_idx: usize,
        max_steps: Option<usize>,
    ) -> Result<(Self, Observation)> {
        cfg.validate()?;
        let min_start = data.min_start(&cfg);
        if start_idx < min_start {
            return Err(Error::InvalidArgument(format!(
                "start index {start_idx} needs at least {min_start} rows of history \
                 (covariance lookback {})",
                cfg.cov_lookback
            )));
        }
        if start_idx + 1 >= data.table().n_rows() {
            return Err(Error::InvalidArgument(
                "start index leaves no steps ahead".into(),
            ));
        }
        let end = match max_steps {
            Some(steps) => (start_idx + steps.max(1)).min(data.table().n_rows() - 1),
            None => data.table().n_rows() - 1,
        };
        let n = data.n_assets();
        let weights = vec![1.0 / n as f64; n];
        let value = cfg.initial_capital;
        let obs = data.observation(start_idx, &weights, &cfg)?;
        Ok((
            PortfolioEnv {
                data,
                cfg,
                t: start_idx,
                end,
                value,
                weights,
                last_returns_row: None,
                done: false,
            },
            obs,
        ))
    }

    pub fn n_assets(&self) -> usize {
        self.data.n_assets()
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn current_index(&self) -> usize {
        self.t
    }

    /// Drifted holdings entering the current decision: previous weights
    /// grown by the previous step's realized returns (equal weights at the
    /// start of the episode).
    pub fn drifted_weights(&self) -> Vec<f64> {
        match self.last_returns_row {
            Some(r) => drift_weights(&self.weights, self.data.returns().row(r)),
            None => vec![1.0 / self.n_assets() as f64; self.n_assets()],
        }
    }

    pub fn step(&mut self, action: &ActionWeights) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if action.len() != self.n_assets() {
            return Err(Error::Dimension("action length != asset count".into()));
        }
        let drifted = self.drifted_weights();
        let next_returns = self.data.returns().row(self.t);
        let settle = settle_rebalance(
            self.value,
            &drifted,
            action.as_slice(),
            next_returns,
            self.cfg.cost_rate,
        );
        self.value = settle.next_value;
        self.weights = action.as_slice().to_vec();
        self.last_returns_row = Some(self.t);
        self.t += 1;
        self.done = self.t >= self.end;
        let observation = self
            .data
            .observation(self.t, &self.drifted_weights(), &self.cfg)?;
        Ok(StepResult {
            observation,
            reward: settle.reward,
            done: self.done,
            info: StepInfo {
                portfolio_value: self.value,
                turnover: settle.turnover,
                cost: settle.cost,
                date_index: self.t,
            },
        })
    }
}

/// Full rollout record of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeTrajectory {
    pub observations: Vec<Observation>,
    pub actions: Vec<ActionWeights>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub turnovers: Vec<f64>,
    pub costs: Vec<f64>,
    pub date_indices: Vec<usize>,
}

impl EpisodeTrajectory {
    /// Equity curve including the initial capital point.
    pub fn equity(&self, initial_capital: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len() + 1);
        out.push(initial_capital);
        out.extend_from_slice(&self.values);
        out
    }
}

/// Runs a policy for `length` steps from `start_idx`.
pub fn run_episode(
    data: Arc<EpisodeData>,
    cfg: EnvConfig,
    mut policy: impl FnMut(&Observation) -> ActionWeights,
    start_idx: usize,
    length: usize,
) -> Result<EpisodeTrajectory> {
    let (mut env, mut obs) = PortfolioEnv::reset(data, cfg, start_idx, Some(length))?;
    let mut traj = EpisodeTrajectory {
        observations: vec![],
        actions: vec![],
        rewards: vec![],
        values: vec![],
        turnovers: vec![],
        costs: vec![],
        date_indices: vec![],
    };
    loop {
        let action = policy(&obs);
        traj.observations.push(obs.clone());
        traj.actions.push(action.clone());
        let step = env.step(&action)?;
        traj.rewards.push(step.reward);
        traj.values.push(step.info.portfolio_value);
        traj.turnovers.push(step.info.turnover);
        traj.costs.push(step.info.cost);
        traj.date_indices.push(step.info.date_index);
        obs = step.observation;
        if step.done {
            break;
        }
    }
    Ok(traj)
}
