//! Allocation strategies behind a common trait, registered by name and
//! selected at runtime.
//!
//! Every strategy sees the market through a [`MarketView`] that exposes
//! only data up to the decision day, and trades through the same cost
//! engine as the RL agent ([`crate::env::settle_rebalance`]), so equity
//! curves are directly comparable. Runs start from all cash, so the first
//! day pays the initial rebalance cost. The index strategy is the one
//! exception: it is a buy-and-hold construction with no rebalancing costs
//! and overrides the daily driver.

mod agent_policy;
mod equal_weight;
mod hybrid_ga;
mod index;
mod markowitz;
mod olmar;
mod simplex;

pub use agent_policy::AgentStrategy;
pub use equal_weight::EqualWeight;
pub use hybrid_ga::{GaParams, HybridGa};
pub use index::{index_curve, IndexStrategy};
pub use markowitz::{markowitz_weights, Markowitz};
pub use olmar::{olmar_update, Olmar};
pub use simplex::project_euclidean;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backtest::EquityCurve;
use crate::env::{drift_weights, settle_rebalance, EnvConfig, EpisodeData, Observation};
use crate::error::{Error, Result};

/// Price-index range of a backtest: decisions happen at every index in
/// `[start, end)`, each settled against the following day's returns.
#[derive(Debug, Clone, Copy)]
pub struct SplitRange {
    pub start: usize,
    pub end: usize,
}

impl SplitRange {
    pub fn validate(&self, data: &EpisodeData) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::InvalidArgument("empty backtest split".into()));
        }
        if self.end >= data.table().n_rows() {
            return Err(Error::InvalidArgument(format!(
                "split end {} outside table of {} rows",
                self.end,
                data.table().n_rows()
            )));
        }
        Ok(())
    }
}

/// No-lookahead window onto the market at one decision day.
pub struct MarketView<'a> {
    data: &'a EpisodeData,
    today: usize,
    holdings: &'a [f64],
}

impl<'a> MarketView<'a> {
    pub fn new(data: &'a EpisodeData, today: usize, holdings: &'a [f64]) -> Self {
        MarketView {
            data,
            today,
            holdings,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.data.n_assets()
    }

    pub fn today(&self) -> usize {
        self.today
    }

    /// Current (drifted) holdings; all zeros on the first day of a run.
    pub fn holdings(&self) -> &[f64] {
        self.holdings
    }

    /// Close rows up to and including today.
    pub fn closes(&self) -> &[Vec<f64>] {
        &self.data.table().closes()[..=self.today]
    }

    /// The last `lookback` return rows ending with yesterday's transition.
    pub fn returns_block(&self, lookback: usize) -> Result<&[Vec<f64>]> {
        if lookback == 0 || lookback > self.today {
            return Err(Error::InvalidArgument(format!(
                "lookback {lookback} not available at index {}",
                self.today
            )));
        }
        Ok(&self.data.returns().values()[self.today - lookback..self.today])
    }

    /// Full MDP observation at today, for policy-backed strategies.
    pub fn observation(&self, cfg: &EnvConfig) -> Result<Observation> {
        self.data.observation(self.today, self.holdings, cfg)
    }
}

/// A daily allocator. `target_weights` must return simplex weights and may
/// keep internal state across days (reset clears it between runs).
pub trait Strategy {
    fn name(&self) -> &str;

    fn reset(&mut self) {}

    fn target_weights(&mut self, view: &MarketView<'_>) -> Result<Vec<f64>>;

    /// Runs the strategy over a split through the shared cost engine.
    fn run(
        &mut self,
        data: &EpisodeData,
        env_cfg: &EnvConfig,
        split: &SplitRange,
    ) -> Result<EquityCurve>
    where
        Self: Sized,
    {
        run_daily_rebalance(self, data, env_cfg, split)
    }
}

/// The default execution loop: each day compute target weights from data
/// up to that day only, settle against the next day's returns.
pub fn run_daily_rebalance<S: Strategy + ?Sized>(
    strategy: &mut S,
    data: &EpisodeData,
    env_cfg: &EnvConfig,
    split: &SplitRange,
) -> Result<EquityCurve> {
    split.validate(data)?;
    strategy.reset();
    let table = data.table();
    let mut value = env_cfg.initial_capital;
    let mut holdings = vec![0.0; data.n_assets()];
    let mut dates = vec![table.dates()[split.start]];
    let mut values = vec![value];
    for t in split.start..split.end {
        let target = {
            let view = MarketView::new(data, t, &holdings);
            strategy.target_weights(&view)?
        };
        validate_simplex(&target)?;
        let next_returns = data.returns().row(t);
        let settle = settle_rebalance(value, &holdings, &target, next_returns, env_cfg.cost_rate);
        value = settle.next_value;
        holdings = drift_weights(&target, next_returns);
        dates.push(table.dates()[t + 1]);
        values.push(value);
    }
    EquityCurve::new(dates, values)
}

pub(crate) fn validate_simplex(w: &[f64]) -> Result<()> {
    if w.iter().any(|x| !x.is_finite() || *x < -1e-12) {
        return Err(Error::NonFinite("strategy weights".into()));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "strategy weights sum to {sum}"
        )));
    }
    Ok(())
}

/// Knobs shared by the built-in baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineParams {
    pub lookback: usize,
    pub markowitz_risk_aversion: f64,
    pub olmar_epsilon: f64,
    pub olmar_ma_window: usize,
    pub ga: GaParams,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            lookback: 60,
            markowitz_risk_aversion: 10.0,
            olmar_epsilon: 10.0,
            olmar_ma_window: 5,
            ga: GaParams::default(),
        }
    }
}

type StrategyBuilder = Box<dyn Fn() -> Box<dyn Strategy>>;

/// Name-keyed registry of strategy constructors. Builtins cover the
/// baseline family; policy-backed strategies are registered by the caller
/// once checkpoints are loaded.
pub struct StrategyRegistry {
    builders: BTreeMap<String, StrategyBuilder>,
}

impl StrategyRegistry {
    pub fn new() -> Self {
        StrategyRegistry {
            builders: BTreeMap::new(),
        }
    }

    pub fn with_builtins(params: &BaselineParams) -> Self {
        let mut reg = Self::new();
        let p = params.clone();
        reg.register("equal-weight", Box::new(|| Box::new(EqualWeight)));
        let m = p.clone();
        reg.register(
            "markowitz",
            Box::new(move || Box::new(Markowitz::new(m.lookback, m.markowitz_risk_aversion))),
        );
        let o = p.clone();
        reg.register(
            "olmar",
            Box::new(move || Box::new(Olmar::new(o.olmar_epsilon, o.olmar_ma_window))),
        );
        let g = p.clone();
        reg.register(
            "hybrid-ga",
            Box::new(move || Box::new(HybridGa::new(g.lookback, g.ga.clone()))),
        );
        reg.register("index", Box::new(|| Box::new(IndexStrategy)));
        reg
    }

    pub fn register(&mut self, name: &str, builder: StrategyBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn Strategy>> {
        self.builders
            .get(name)
            .map(|b| b())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown strategy {name:?}; registered: {}",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<String> {
        self.builders.keys().cloned().collect()
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::new()
    }
}

/// Runs a boxed strategy (trait objects cannot use the default method
/// directly because of the `Sized` bound on `run`). Backtests accept only
/// real market data; synthetic tables exist for training augmentation and
/// are rejected here.
pub fn run_strategy(
    strategy: &mut dyn Strategy,
    data: &EpisodeData,
    env_cfg: &EnvConfig,
    split: &SplitRange,
) -> Result<EquityCurve> {
    if data.table().origin() != crate::market_data::DataOrigin::Real {
        return Err(Error::InvalidArgument(
            "backtest refuses synthetic-origin price data".into(),
        ));
    }
    if strategy.name() == "index" {
        index_curve(data, env_cfg, split)
    } else {
        run_daily_rebalance(strategy, data, env_cfg, split)
    }
}
