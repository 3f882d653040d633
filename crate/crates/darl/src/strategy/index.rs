//! Market index benchmark: a price-weighted buy-and-hold of the
//! constituents (a supplied single-series table is just the one-asset
//! case). No rebalancing, no costs.

use super::{MarketView, SplitRange, Strategy};
use crate::backtest::EquityCurve;
use crate::env::{EnvConfig, EpisodeData};
use crate::error::Result;

pub struct IndexStrategy;

impl Strategy for IndexStrategy {
    fn name(&self) -> &str {
        "index"
    }

    /// Price-weighted holdings, for callers that ask anyway; the real
    /// curve comes from [`index_curve`].
    fn target_weights(&mut self, view: &MarketView<'_>) -> Result<Vec<f64>> {
        let today = &view.closes()[view.today()];
        let total: f64 = today.iter().sum();
        Ok(today.iter().map(|p| p / total).collect())
    }

    fn run(
        &mut self,
        data: &EpisodeData,
        env_cfg: &EnvConfig,
        split: &SplitRange,
    ) -> Result<EquityCurve> {
        index_curve(data, env_cfg, split)
    }
}

/// V_t = capital · Σ_i p_{t,i} / Σ_i p_{start,i}.
pub fn index_curve(
    data: &EpisodeData,
    env_cfg: &EnvConfig,
    split: &SplitRange,
) -> Result<EquityCurve> {
    split.validate(data)?;
    let table = data.table();
    let base: f64 = table.row(split.start).iter().sum();
    let mut dates = Vec::with_capacity(split.end - split.start + 1);
    let mut values = Vec::with_capacity(split.end - split.start + 1);
    for t in split.start..=split.end {
        let level: f64 = table.row(t).iter().sum();
        dates.push(table.dates()[t]);
        values.push(env_cfg.initial_capital * (level / base));
    }
    EquityCurve::new(dates, values)
}

#[cfg(test)]
mod tests {
    use super::super::test_fixtures::*;
    use super::*;
    use crate::env::EpisodeData;

    #[test]
    fn doubling_index_doubles_capital() {
        let closes: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let g = 1.0 + i as f64 / 39.0; // 1 -> 2 linearly
                vec![100.0 * g, 50.0 * g]
            })
            .collect();
        let data = EpisodeData::prepare(table(closes), &small_env()).unwrap();
        let curve = index_curve(
            &data,
            &small_env(),
            &SplitRange { start: 0, end: 39 },
        )
        .unwrap();
        let first = curve.values()[0];
        let last = *curve.values().last().unwrap();
        assert!((last / first - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equal_constant_prices_give_flat_curve() {
        let closes: Vec<Vec<f64>> = (0..40).map(|_| vec![25.0, 25.0]).collect();
        let data = EpisodeData::prepare(table(closes), &small_env()).unwrap();
        let curve = index_curve(&data, &small_env(), &SplitRange { start: 5, end: 30 }).unwrap();
        assert!(curve.values().iter().all(|v| (*v - 1_000_000.0).abs() < 1e-9));
    }

    #[test]
    fn price_weighted_two_asset_hand_calc() {
        // Rows: (100, 50) -> (110, 40) -> (120, 60).
        let mut closes: Vec<Vec<f64>> = (0..35).map(|_| vec![100.0, 50.0]).collect();
        closes.push(vec![110.0, 40.0]);
        closes.push(vec![120.0, 60.0]);
        let data = EpisodeData::prepare(table(closes), &small_env()).unwrap();
        let curve =
            index_curve(&data, &small_env(), &SplitRange { start: 34, end: 36 }).unwrap();
        let v = curve.values();
        assert!((v[0] - 1_000_000.0).abs() < 1e-9);
        assert!((v[1] - 1_000_000.0 * 150.0 / 150.0).abs() < 1e-9);
        assert!((v[2] - 1_000_000.0 * 180.0 / 150.0).abs() < 1e-9);
    }
}
