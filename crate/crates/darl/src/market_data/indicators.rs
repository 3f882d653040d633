//! Technical indicators on close-only data: MACD, RSI(14), CCI(14),
//! ADX(14). Only closes are ingested, so CCI's typical price reduces to
//! the close and ADX's true range is approximated by |Δclose|. Rows
//! before an indicator's warmup are filled with neutral values
//! (MACD 0, RSI 50, CCI 0, ADX 25).

use chrono::NaiveDate;

use super::PriceTable;
use crate::error::{Error, Result};

const RSI_PERIOD: usize = 14;
const CCI_PERIOD: usize = 14;
const ADX_PERIOD: usize = 14;
const MACD_FAST: usize = 12;
const MACD_SLOW: usize = 26;

pub const NEUTRAL_MACD: f64 = 0.0;
pub const NEUTRAL_RSI: f64 = 50.0;
pub const NEUTRAL_CCI: f64 = 0.0;
pub const NEUTRAL_ADX: f64 = 25.0;

/// Per-date, per-asset indicator values, aligned with the price table rows.
#[derive(Debug, Clone)]
pub struct IndicatorSet {
    dates: Vec<NaiveDate>,
    pub macd: Vec<Vec<f64>>,
    pub rsi: Vec<Vec<f64>>,
    pub cci: Vec<Vec<f64>>,
    pub adx: Vec<Vec<f64>>,
}

impl IndicatorSet {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    /// [macd, rsi, cci, adx] for one asset at one row.
    pub fn at(&self, row: usize, asset: usize) -> [f64; 4] {
        [
            self.macd[row][asset],
            self.rsi[row][asset],
            self.cci[row][asset],
            self.adx[row][asset],
        ]
    }
}

pub fn compute_indicators(prices: &PriceTable) -> Result<IndicatorSet> {
    let rows = prices.n_rows();
    if rows < 30 {
        return Err(Error::InvalidArgument(format!(
            "indicators need at least 30 date rows, got {rows}"
        )));
    }
    let n = prices.n_assets();
    let mut set = IndicatorSet {
        dates: prices.dates().to_vec(),
        macd: vec![vec![NEUTRAL_MACD; n]; rows],
        rsi: vec![vec![NEUTRAL_RSI; n]; rows],
        cci: vec![vec![NEUTRAL_CCI; n]; rows],
        adx: vec![vec![NEUTRAL_ADX; n]; rows],
    };
    for asset in 0..n {
        let closes: Vec<f64> = (0..rows).map(|t| prices.close(t, asset)).collect();
        fill_macd(&closes, asset, &mut set.macd);
        fill_rsi(&closes, asset, &mut set.rsi);
        fill_cci(&closes, asset, &mut set.cci);
        fill_adx(&closes, asset, &mut set.adx);
    }
    Ok(set)
}

/// EMA12 - EMA26, both seeded at the first close; defined once the slow
/// span has a full lookback.
fn fill_macd(closes: &[f64], asset: usize, out: &mut [Vec<f64>]) {
    let mut ema_fast = closes[0];
    let mut ema_slow = closes[0];
    let k_fast = 2.0 / (MACD_FAST as f64 + 1.0);
    let k_slow = 2.0 / (MACD_SLOW as f64 + 1.0);
    for (t, &c) in closes.iter().enumerate() {
        if t > 0 {
            ema_fast += k_fast * (c - ema_fast);
            ema_slow += k_slow * (c - ema_slow);
        }
        if t + 1 >= MACD_SLOW {
            out[t][asset] = ema_fast - ema_slow;
        }
    }
}

/// Wilder RSI: first averages are simple means of the first 14 gains and
/// losses, then avg = (prev*13 + current)/14.
fn fill_rsi(closes: &[f64], asset: usize, out: &mut [Vec<f64>]) {
    if closes.len() <= RSI_PERIOD {
        return;
    }
    let mut avg_gain = 0.0;
    let mut avg_loss = 0.0;
    for t in 1..=RSI_PERIOD {
        let d = closes[t] - closes[t - 1];
        avg_gain += d.max(0.0);
        avg_loss += (-d).max(0.0);
    }
    avg_gain /= RSI_PERIOD as f64;
    avg_loss /= RSI_PERIOD as f64;
    out[RSI_PERIOD][asset] = rsi_from_averages(avg_gain, avg_loss);
    for t in RSI_PERIOD + 1..closes.len() {
        let d = closes[t] - closes[t - 1];
        avg_gain = (avg_gain * (RSI_PERIOD as f64 - 1.0) + d.max(0.0)) / RSI_PERIOD as f64;
        avg_loss = (avg_loss * (RSI_PERIOD as f64 - 1.0) + (-d).max(0.0)) / RSI_PERIOD as f64;
        out[t][asset] = rsi_from_averages(avg_gain, avg_loss);
    }
}

fn rsi_from_averages(avg_gain: f64, avg_loss: f64) -> f64 {
    if avg_loss == 0.0 && avg_gain == 0.0 {
        NEUTRAL_RSI
    } else if avg_loss == 0.0 {
        100.0
    } else {
        100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    }
}

/// CCI on the close (typical price == close here); zero mean deviation
/// maps to 0.
fn fill_cci(closes: &[f64], asset: usize, out: &mut [Vec<f64>]) {
    for t in CCI_PERIOD - 1..closes.len() {
        let window = &closes[t + 1 - CCI_PERIOD..=t];
        let sma: f64 = window.iter().sum::<f64>() / CCI_PERIOD as f64;
        let mean_dev: f64 =
            window.iter().map(|c| (c - sma).abs()).sum::<f64>() / CCI_PERIOD as f64;
        out[t][asset] = if mean_dev == 0.0 {
            NEUTRAL_CCI
        } else {
            (closes[t] - sma) / (0.015 * mean_dev)
        };
    }
}

/// ADX with the true range approximated by |Δclose|. With closes only, an
/// up move implies zero down move, so +DM/−DM are just the signed parts of
/// the delta. Wilder-smoothed averages; DX is 0 whenever the smoothed
/// range or DI sum vanishes.
fn fill_adx(closes: &[f64], asset: usize, out: &mut [Vec<f64>]) {
    let deltas: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
    if deltas.len() < 2 * ADX_PERIOD {
        return;
    }
    let p = ADX_PERIOD as f64;
    let mut sm_tr = 0.0;
    let mut sm_up = 0.0;
    let mut sm_down = 0.0;
    for d in &deltas[..ADX_PERIOD] {
        sm_tr += d.abs();
        sm_up += d.max(0.0);
        sm_down += (-d).max(0.0);
    }
    sm_tr /= p;
    sm_up /= p;
    sm_down /= p;

    let mut dx_history: Vec<f64> = vec![dx_value(sm_tr, sm_up, sm_down)];
    let mut adx = f64::NAN;
    for (k, d) in deltas.iter().enumerate().skip(ADX_PERIOD) {
        sm_tr = (sm_tr * (p - 1.0) + d.abs()) / p;
        sm_up = (sm_up * (p - 1.0) + d.max(0.0)) / p;
        sm_down = (sm_down * (p - 1.0) + (-d).max(0.0)) / p;
        let dx = dx_value(sm_tr, sm_up, sm_down);
        if dx_history.len() < ADX_PERIOD {
            dx_history.push(dx);
            if dx_history.len() == ADX_PERIOD {
                adx = dx_history.iter().sum::<f64>() / p;
                out[k + 1][asset] = adx;
            }
        } else {
            adx = (adx * (p - 1.0) + dx) / p;
            out[k + 1][asset] = adx;
        }
    }
}

fn dx_value(sm_tr: f64, sm_up: f64, sm_down: f64) -> f64 {
    if sm_tr == 0.0 {
        return 0.0;
    }
    let di_plus = 100.0 * sm_up / sm_tr;
    let di_minus = 100.0 * sm_down / sm_tr;
    let denom = di_plus + di_minus;
    if denom == 0.0 {
        0.0
    } else {
        100.0 * (di_plus - di_minus).abs() / denom
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::table_from_closes;
    use super::*;

    #[test]
    fn strictly_rising_prices_pin_rsi_at_100() {
        let closes: Vec<Vec<f64>> = (0..50).map(|i| vec![100.0 + i as f64]).collect();
        let t = table_from_closes(closes);
        let ind = compute_indicators(&t).unwrap();
        assert_eq!(ind.rsi[49][0], 100.0);
    }

    #[test]
    fn constant_prices_give_neutral_macd_and_cci() {
        let closes: Vec<Vec<f64>> = (0..60).map(|_| vec![42.0]).collect();
        let t = table_from_closes(closes);
        let ind = compute_indicators(&t).unwrap();
        for row in 30..60 {
            assert_eq!(ind.macd[row][0], 0.0);
            assert_eq!(ind.cci[row][0], 0.0);
            assert_eq!(ind.rsi[row][0], 50.0);
        }
    }

    #[test]
    fn warmup_rows_hold_neutral_values() {
        let closes: Vec<Vec<f64>> = (0..40).map(|i| vec![100.0 + (i % 5) as f64]).collect();
        let t = table_from_closes(closes);
        let ind = compute_indicators(&t).unwrap();
        assert_eq!(ind.macd[0][0], NEUTRAL_MACD);
        assert_eq!(ind.rsi[5][0], NEUTRAL_RSI);
        assert_eq!(ind.cci[3][0], NEUTRAL_CCI);
        assert_eq!(ind.adx[20][0], NEUTRAL_ADX);
    }

    #[test]
    fn too_short_history_is_an_error() {
        let closes: Vec<Vec<f64>> = (0..20).map(|i| vec![100.0 + i as f64]).collect();
        let t = table_from_closes(closes);
        assert!(compute_indicators(&t).is_err());
    }

    #[test]
    fn rsi_matches_wilder_recursion_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut price = 100.0;
        let mut closes = vec![vec![price]];
        for _ in 0..59 {
            price *= 1.0 + 0.02 * (rng.random::<f64>() - 0.5);
            closes.push(vec![price]);
        }
        let series: Vec<f64> = closes.iter().map(|r| r[0]).collect();
        let t = table_from_closes(closes);
        let ind = compute_indicators(&t).unwrap();

        // Independent re-statement of the Wilder recursion.
        let mut gains = vec![0.0];
        let mut losses = vec![0.0];
        for w in series.windows(2) {
            gains.push((w[1] - w[0]).max(0.0));
            losses.push((w[0] - w[1]).max(0.0));
        }
        let mut ag: f64 = gains[1..=14].iter().sum::<f64>() / 14.0;
        let mut al: f64 = losses[1..=14].iter().sum::<f64>() / 14.0;
        for t_idx in 14..series.len() {
            if t_idx > 14 {
                ag = (ag * 13.0 + gains[t_idx]) / 14.0;
                al = (al * 13.0 + losses[t_idx]) / 14.0;
            }
            let expect = 100.0 - 100.0 / (1.0 + ag / al);
            assert!(
                (ind.rsi[t_idx][0] - expect).abs() < 1e-9,
                "row {t_idx}: {} vs {expect}",
                ind.rsi[t_idx][0]
            );
        }
    }

    #[test]
    fn rsi_stays_in_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut price = 50.0;
        let mut closes = vec![vec![price]];
        for _ in 0..199 {
            price *= 1.0 + 0.06 * (rng.random::<f64>() - 0.5);
            closes.push(vec![price]);
        }
        let t = table_from_closes(closes);
        let ind = compute_indicators(&t).unwrap();
        for row in &ind.rsi {
            assert!(row[0] >= 0.0 && row[0] <= 100.0);
        }
    }
}
