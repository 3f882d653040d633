//! CSV ingestion with a deterministic missing-data policy: forward-fill
//! interior gaps from the previous close, drop leading rows that cannot be
//! filled, and reject tickers whose raw missing fraction exceeds a limit.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DataOrigin, PriceTable};
use crate::error::{Error, Result};

/// What to do with a ticker that trips the missing-data limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectAction {
    /// Fail ingestion, naming the ticker.
    Error,
    /// Drop the column and report it in [`Ingestion::rejected_tickers`].
    Drop,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Minimum surviving date rows; defaults to 300.
    pub min_rows: usize,
    /// Missing-cell fraction above which a ticker is rejected (default 10%).
    pub max_missing_frac: f64,
    pub reject_action: RejectAction,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            min_rows: 300,
            max_missing_frac: 0.10,
            reject_action: RejectAction::Error,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ingestion {
    pub table: PriceTable,
    pub rejected_tickers: Vec<String>,
}

/// Loads `date,T1,...,TN` CSV into a validated [`PriceTable`].
///
/// Cells that are empty, `NA`/`NaN`, or non-positive count as missing.
/// Rows are sorted by date; duplicates are an error.
pub fn load_csv(path: &Path, options: &IngestOptions) -> Result<Ingestion> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() || !headers[0].eq_ignore_ascii_case("date") {
        return Err(Error::Csv(format!(
            "{}: first header column must be `date`, got {:?}",
            path.display(),
            headers.get(0).unwrap_or("")
        )));
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if tickers.len() < 2 {
        return Err(Error::Ingest(format!(
            "{}: fewer than 2 tickers in header",
            path.display()
        )));
    }

    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        if record.len() != tickers.len() + 1 {
            return Err(Error::Csv(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                line + 2,
                record.len(),
                tickers.len() + 1
            )));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| {
            Error::Csv(format!(
                "{}: row {}: bad date {:?}: {e}",
                path.display(),
                line + 2,
                &record[0]
            ))
        })?;
        let mut cells = Vec::with_capacity(tickers.len());
        for (k, raw) in record.iter().skip(1).enumerate() {
            cells.push(parse_cell(raw).map_err(|msg| {
                Error::Csv(format!(
                    "{}: row {}, ticker {}: {msg}",
                    path.display(),
                    line + 2,
                    tickers[k]
                ))
            })?);
        }
        rows.push((date, cells));
    }
    if rows.is_empty() {
        return Err(Error::Ingest(format!("{}: no data rows", path.display())));
    }

    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Ingest(format!("duplicate date row {}", w[0].0)));
        }
    }

    // Missing fractions are judged on the raw parsed rows, before any fill.
    let total = rows.len() as f64;
    let mut kept: Vec<usize> = Vec::new();
    let mut rejected: Vec<String> = Vec::new();
    for (i, ticker) in tickers.iter().enumerate() {
        let missing = rows.iter().filter(|(_, cells)| cells[i].is_none()).count();
        let frac = missing as f64 / total;
        if frac > options.max_missing_frac {
            match options.reject_action {
                RejectAction::Error => {
                    return Err(Error::TickerRejected {
                        ticker: ticker.clone(),
                        missing_pct: 100.0 * frac,
                        limit_pct: 100.0 * options.max_missing_frac,
                    });
                }
                RejectAction::Drop => rejected.push(ticker.clone()),
            }
        } else {
            kept.push(i);
        }
    }
    if kept.len() < 2 {
        return Err(Error::Ingest(
            "fewer than 2 tickers survive the missing-data policy".into(),
        ));
    }

    // Forward-fill; rows that still have a hole (leading gaps) are dropped.
    let mut last: Vec<Option<f64>> = vec![None; kept.len()];
    let mut dates = Vec::new();
    let mut closes = Vec::new();
    for (date, cells) in &rows {
        for (slot, &i) in kept.iter().enumerate() {
            if let Some(v) = cells[i] {
                last[slot] = Some(v);
            }
        }
        if last.iter().all(Option::is_some) {
            dates.push(*date);
            closes.push(last.iter().map(|v| v.unwrap()).collect());
        }
    }

    if dates.len() < options.min_rows {
        return Err(Error::Ingest(format!(
            "{} usable date rows, need at least {}",
            dates.len(),
            options.min_rows
        )));
    }

    let table = PriceTable::new(
        dates,
        kept.iter().map(|&i| tickers[i].clone()).collect(),
        closes,
        DataOrigin::Real,
    )?;
    Ok(Ingestion {
        table,
        rejected_tickers: rejected,
    })
}

fn parse_cell(raw: &str) -> std::result::Result<Option<f64>, String> {
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = raw
        .parse()
        .map_err(|e| format!("unparseable price {raw:?}: {e}"))?;
    // Non-positive prices are treated as missing, not as data.
    if !v.is_finite() || v <= 0.0 {
        return Ok(None);
    }
    Ok(Some(v))
}
