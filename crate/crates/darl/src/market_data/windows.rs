//! Return windows for diffusion training: per-asset z-scoring, crash
//! intensity labels, and the reproducible dataset cache.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{compute_returns, DataOrigin, PriceTable, ReturnMatrix};
use crate::error::{Error, Result};
use crate::util::sha256_hex;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Drawdown at which the crash label saturates: a 20% intra-window
/// drawdown or worse maps to intensity 1.
pub const CRASH_DRAWDOWN_REF: f64 = 0.20;

/// Per-asset mean and standard deviation of training returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn n_assets(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, raw: f64, asset: usize) -> f64 {
        (raw - self.mean[asset]) / self.std[asset]
    }

    pub fn destandardize(&self, z: f64, asset: usize) -> f64 {
        z * self.std[asset] + self.mean[asset]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WindowOrigin {
    Real { start: NaiveDate, end: NaiveDate },
    Synthetic,
}

/// One diffusion training unit: an L×N window of standardized returns and
/// its crash-intensity label.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub window: Vec<Vec<f64>>,
    pub intensity: f64,
    pub origin: WindowOrigin,
}

impl WindowSample {
    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn n_assets(&self) -> usize {
        self.window.first().map_or(0, Vec::len)
    }
}

/// Crash intensity of a RAW (unstandardized) return window: the max
/// drawdown of an equal-weight buy-and-hold portfolio over the window,
/// clipped at [`CRASH_DRAWDOWN_REF`] and rescaled into [0,1].
pub fn label_crash_intensity(raw_window: &[Vec<f64>]) -> f64 {
    assert!(!raw_window.is_empty(), "crash label needs a non-empty window");
    let n = raw_window[0].len();
    let mut growth = vec![1.0; n];
    let mut peak = 1.0f64;
    let mut max_drawdown = 0.0f64;
    for row in raw_window {
        for (g, r) in growth.iter_mut().zip(row) {
            *g *= 1.0 + r;
        }
        let value: f64 = growth.iter().sum::<f64>() / n as f64;
        peak = peak.max(value);
        max_drawdown = max_drawdown.max(1.0 - value / peak);
    }
    (max_drawdown / CRASH_DRAWDOWN_REF).min(1.0)
}

/// Slices the return matrix into stride-spaced windows, z-scored with
/// stats taken over the full range. Labels are computed on the raw
/// window before standardization.
pub fn extract_windows(
    returns: &ReturnMatrix,
    window_len: usize,
    stride: usize,
) -> Result<(Vec<WindowSample>, StandardizationStats)> {
    if window_len == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "window length and stride must be positive".into(),
        ));
    }
    if window_len > returns.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "window length {window_len} exceeds {} return rows",
            returns.n_rows()
        )));
    }
    let stats = standardization_stats(returns)?;
    let mut samples = Vec::new();
    let mut start = 0;
    while start + window_len <= returns.n_rows() {
        let raw = &returns.values()[start..start + window_len];
        let intensity = label_crash_intensity(raw);
        let window = raw
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(i, &r)| stats.standardize(r, i))
                    .collect()
            })
            .collect();
        samples.push(WindowSample {
            window,
            intensity,
            origin: WindowOrigin::Real {
                start: returns.dates()[start],
                end: returns.dates()[start + window_len - 1],
            },
        });
        start += stride;
    }
    Ok((samples, stats))
}

fn standardization_stats(returns: &ReturnMatrix) -> Result<StandardizationStats> {
    let n = returns.n_assets();
    let rows = returns.n_rows();
    if rows < 2 {
        return Err(Error::InvalidArgument(
            "standardization needs at least 2 return rows".into(),
        ));
    }
    let mut mean = vec![0.0; n];
    for row in returns.values() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }
    let mut var = vec![0.0; n];
    for row in returns.values() {
        for i in 0..n {
            let d = row[i] - mean[i];
            var[i] += d * d;
        }
    }
    let mut std = vec![0.0; n];
    for i in 0..n {
        std[i] = (var[i] / (rows as f64 - 1.0)).sqrt();
        if !(std[i] > 0.0) {
            return Err(Error::Ingest(format!(
                "asset {i} has zero return variance; rejected at ingestion"
            )));
        }
    }
    Ok(StandardizationStats { mean, std })
}

/// Index entry for a cached window: the start row in return space plus the
/// precomputed label. Standardized windows are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowIndexEntry {
    pub start_row: usize,
    pub intensity: f64,
}

/// The single, binary-free JSON artifact that makes a training run
/// reproducible: prices, standardization stats, and the window index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCache {
    pub format_version: u32,
    pub source_hash: String,
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<Vec<f64>>,
    pub rejected_tickers: Vec<String>,
    pub window_len: usize,
    pub stride: usize,
    /// Last price row belonging to the training range. Windows and
    /// standardization stats are built strictly from rows up to here;
    /// later rows exist only for out-of-sample evaluation.
    pub train_end_row: usize,
    pub stats: StandardizationStats,
    pub windows: Vec<WindowIndexEntry>,
}

impl DatasetCache {
    pub fn build(
        table: &PriceTable,
        rejected_tickers: Vec<String>,
        window_len: usize,
        stride: usize,
        train_end_row: Option<usize>,
        source_hash: String,
    ) -> Result<DatasetCache> {
        let end = train_end_row.unwrap_or(table.n_rows() - 1);
        if end >= table.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "train end row {end} outside table of {} rows",
                table.n_rows()
            )));
        }
        let train = table.truncated(end)?;
        let returns = compute_returns(&train);
        let (samples, stats) = extract_windows(&returns, window_len, stride)?;
        let windows = samples
            .iter()
            .enumerate()
            .map(|(k, s)| WindowIndexEntry {
                start_row: k * stride,
                intensity: s.intensity,
            })
            .collect();
        Ok(DatasetCache {
            format_version: DATASET_FORMAT_VERSION,
            source_hash,
            tickers: table.tickers().to_vec(),
            dates: table.dates().to_vec(),
            closes: table.closes().to_vec(),
            rejected_tickers,
            window_len,
            stride,
            train_end_row: end,
            stats,
            windows,
        })
    }

    /// The full ingested table, training and evaluation rows alike.
    pub fn price_table(&self) -> Result<PriceTable> {
        PriceTable::new(
            self.dates.clone(),
            self.tickers.clone(),
            self.closes.clone(),
            DataOrigin::Real,
        )
    }

    /// The training slice only (rows up to `train_end_row`).
    pub fn train_table(&self) -> Result<PriceTable> {
        self.price_table()?.truncated(self.train_end_row)
    }

    /// Rebuilds the standardized window samples from the cached index.
    pub fn window_samples(&self) -> Result<Vec<WindowSample>> {
        let table = self.train_table()?;
        let returns = compute_returns(&table);
        let mut out = Vec::with_capacity(self.windows.len());
        for entry in &self.windows {
            let end = entry.start_row + self.window_len;
            if end > returns.n_rows() {
                return Err(Error::Checkpoint(format!(
                    "window index entry at row {} overruns the data",
                    entry.start_row
                )));
            }
            let window = returns.values()[entry.start_row..end]
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(i, &r)| self.stats.standardize(r, i))
                        .collect()
                })
                .collect();
            out.push(WindowSample {
                window,
                intensity: entry.intensity,
                origin: WindowOrigin::Real {
                    start: returns.dates()[entry.start_row],
                    end: returns.dates()[end - 1],
                },
            });
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<DatasetCache> {
        let cache: DatasetCache =
            serde_json::from_str(json).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if cache.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported dataset format version {}",
                cache.format_version
            )));
        }
        Ok(cache)
    }

    /// Content hash of the cache, recorded in model checkpoints.
    pub fn content_hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }
}
