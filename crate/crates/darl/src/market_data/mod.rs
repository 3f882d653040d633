//! Market data ingestion and feature construction: CSV of daily closes in,
//! returns, rolling covariances, technical indicators, and labeled
//! diffusion training windows out.
//!
//! All operations are pure functions of their inputs; nothing here holds
//! shared mutable state.

mod indicators;
mod ingest;
mod windows;

pub use indicators::{compute_indicators, IndicatorSet};
pub use ingest::{load_csv, IngestOptions, Ingestion, RejectAction};
pub use windows::{
    extract_windows, label_crash_intensity, DatasetCache, StandardizationStats, WindowIndexEntry,
    WindowOrigin, WindowSample, CRASH_DRAWDOWN_REF,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a price series came from. Synthetic tables are for training
/// augmentation only; the backtester refuses them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataOrigin {
    Real,
    Synthetic,
}

/// Dates × assets matrix of daily closes; the single source of market truth.
///
/// Invariants enforced at construction: strictly increasing dates, all
/// closes finite and positive, consistent row widths. CSV ingestion
/// additionally requires at least two tickers; in-memory tables (toy
/// fixtures, synthetic fragments) may carry a single asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    closes: Vec<Vec<f64>>,
    origin: DataOrigin,
}

impl PriceTable {
    pub fn new(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        closes: Vec<Vec<f64>>,
        origin: DataOrigin,
    ) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::Ingest("price table needs at least one ticker".into()));
        }
        if dates.len() != closes.len() {
            return Err(Error::Dimension(format!(
                "{} dates vs {} close rows",
                dates.len(),
                closes.len()
            )));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Ingest(format!(
                    "dates not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        for (r, row) in closes.iter().enumerate() {
            if row.len() != tickers.len() {
                return Err(Error::Dimension(format!(
                    "row {r} has {} cells for {} tickers",
                    row.len(),
                    tickers.len()
                )));
            }
            if row.iter().any(|c| !c.is_finite() || *c <= 0.0) {
                return Err(Error::Ingest(format!(
                    "non-positive or non-finite close in row {r}"
                )));
            }
        }
        Ok(PriceTable {
            dates,
            tickers,
            closes,
            origin,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn close(&self, row: usize, asset: usize) -> f64 {
        self.closes[row][asset]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.closes[row]
    }

    pub fn closes(&self) -> &[Vec<f64>] {
        &self.closes
    }

    pub fn origin(&self) -> DataOrigin {
        self.origin
    }

    /// Index of the first date >= `date`, if any.
    pub fn index_at_or_after(&self, date: NaiveDate) -> Option<usize> {
        self.dates.iter().position(|d| *d >= date)
    }

    /// Index of the last date <= `date`, if any.
    pub fn index_at_or_before(&self, date: NaiveDate) -> Option<usize> {
        self.dates.iter().rposition(|d| *d <= date)
    }

    /// A new table covering rows `[0, end_row]` of this one.
    pub fn truncated(&self, end_row: usize) -> Result<PriceTable> {
        if end_row >= self.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "truncate end {end_row} out of range {}",
                self.n_rows()
            )));
        }
        PriceTable::new(
            self.dates[..=end_row].to_vec(),
            self.tickers.clone(),
            self.closes[..=end_row].to_vec(),
            self.origin,
        )
    }
}

/// Simple returns derived from a price table. Row `t` describes the
/// transition from price row `t` to `t+1` and carries the later date.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    dates: Vec<NaiveDate>,
    values: Vec<Vec<f64>>,
}

impl ReturnMatrix {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_assets(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// values[t][i] = closes[t+1][i] / closes[t][i] - 1.
pub fn compute_returns(prices: &PriceTable) -> ReturnMatrix {
    let n = prices.n_assets();
    let mut values = Vec::with_capacity(prices.n_rows().saturating_sub(1));
    for t in 0..prices.n_rows().saturating_sub(1) {
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            row.push(prices.close(t + 1, i) / prices.close(t, i) - 1.0);
        }
        values.push(row);
    }
    ReturnMatrix {
        dates: prices.dates[1..].to_vec(),
        values,
    }
}

/// Sample covariance of asset returns over a trailing window.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub as_of: NaiveDate,
    values: Vec<Vec<f64>>,
}

impl CovarianceMatrix {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Row-major upper triangle including the diagonal, length n(n+1)/2.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push(self.values[i][j]);
            }
        }
        out
    }
}

/// Trailing sample covariance (denominator `lookback - 1`) at every date
/// with a full window; each matrix is symmetrized as `(S + Sᵀ)/2`.
pub fn rolling_covariance(
    returns: &ReturnMatrix,
    lookback: usize,
) -> Result<Vec<CovarianceMatrix>> {
    if lookback < 2 {
        return Err(Error::InvalidArgument("covariance lookback must be >= 2".into()));
    }
    if lookback > returns.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "covariance lookback {lookback} exceeds {} return rows",
            returns.n_rows()
        )));
    }
    let n = returns.n_assets();
    let mut out = Vec::with_capacity(returns.n_rows() - lookback + 1);
    for end in lookback - 1..returns.n_rows() {
        let window = &returns.values[end + 1 - lookback..=end];
        out.push(CovarianceMatrix {
            as_of: returns.dates[end],
            values: sample_covariance(window, n),
        });
    }
    Ok(out)
}

fn sample_covariance(window: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let rows = window.len() as f64;
    let mut mean = vec![0.0; n];
    for row in window {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= rows;
    }
    let mut cov = vec![vec![0.0; n]; n];
    for row in window {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in i..n {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = rows - 1.0;
    for i in 0..n {
        for j in i..n {
            let v = cov[i][j] / denom;
            // (S + Sᵀ)/2 — the two-pass accumulator is symmetric already,
            // so mirroring the upper triangle is the symmetrization.
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    cov
}
