//! Equity-curve evaluation: cumulative and annualized return, Sharpe,
//! Calmar, annual volatility, and maximum drawdown, plus the comparison
//! table across strategies.
//!
//! Conventions: 252 trading days per year, zero risk-free rate, sample
//! (n-1) standard deviation. A zero-variance curve reports Sharpe 0 with
//! a warning flag instead of NaN; Calmar of a drawdown-free curve is
//! infinite (serialized as null in JSON).

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Time series of portfolio value under a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl EquityCurve {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} dates vs {} values",
                dates.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument(
                "equity curve values must be positive".into(),
            ));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidArgument(
                    "equity curve dates must be increasing".into(),
                ));
            }
        }
        Ok(EquityCurve { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn daily_returns(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }
}

/// The six performance indicators. Percent-columns are stored in percent
/// units (e.g. 12.5 for +12.5%); Sharpe and Calmar are plain ratios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerfReport {
    pub cumulative_return_pct: f64,
    pub annualized_return_pct: f64,
    pub sharpe: f64,
    pub calmar: f64,
    pub annual_volatility_pct: f64,
    pub max_drawdown_pct: f64,
    /// Set when the curve had zero return variance (Sharpe pinned to 0).
    pub zero_variance: bool,
}

/// Computes the performance indicators of a curve with at least 2 points.
pub fn evaluate(curve: &EquityCurve) -> Result<PerfReport> {
    evaluate_with(curve, TRADING_DAYS_PER_YEAR, 0.0)
}

pub fn evaluate_with(
    curve: &EquityCurve,
    trading_days: f64,
    risk_free_daily: f64,
) -> Result<PerfReport> {
    let m = curve.len();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least 2 curve points".into(),
        ));
    }
    let v = curve.values();
    let cumulative = v[m - 1] / v[0] - 1.0;
    let annualized = (1.0 + cumulative).powf(trading_days / (m as f64 - 1.0)) - 1.0;

    let d = curve.daily_returns();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = if d.len() > 1 {
        d.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (d.len() as f64 - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    let zero_variance = std == 0.0;
    let sharpe = if zero_variance {
        0.0
    } else {
        (mean - risk_free_daily) / std * trading_days.sqrt()
    };
    let volatility = std * trading_days.sqrt();

    let max_drawdown = max_drawdown(v);
    let calmar = if max_drawdown == 0.0 {
        f64::INFINITY
    } else {
        annualized / max_drawdown.abs()
    };

    Ok(PerfReport {
        cumulative_return_pct: 100.0 * cumulative,
        annualized_return_pct: 100.0 * annualized,
        sharpe,
        calmar,
        annual_volatility_pct: 100.0 * volatility,
        max_drawdown_pct: 100.0 * max_drawdown,
        zero_variance,
    })
}

/// min_t (V_t / max_{s<=t} V_s - 1); always in [-1, 0].
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in values {
        peak = peak.max(v);
        worst = worst.min(v / peak - 1.0);
    }
    worst
}

/// Pointwise normalization V_t/V_0 - 1; first element is exactly 0.
pub fn cumulative_series(curve: &EquityCurve) -> Vec<(NaiveDate, f64)> {
    let v0 = curve.values()[0];
    curve
        .dates()
        .iter()
        .zip(curve.values())
        .map(|(d, v)| (*d, v / v0 - 1.0))
        .collect()
}

/// Fixed presentation order: the proposed agent first, its ablation next,
/// then the baselines, the index last. Unknown names slot in with the
/// baselines, alphabetically.
const ROW_ORDER: [&str; 6] = [
    "darl",
    "without-augmentation",
    "olmar",
    "hybrid-ga",
    "markowitz",
    "equal-weight",
];

fn row_rank(name: &str) -> usize {
    if name == "index" {
        return ROW_ORDER.len() + 1;
    }
    ROW_ORDER
        .iter()
        .position(|n| *n == name)
        .unwrap_or(ROW_ORDER.len())
}

pub const INDICATOR_COLUMNS: [&str; 6] = [
    "Cumulative Return (%)",
    "Annualized Return (%)",
    "Sharpe Ratio",
    "Calmar Ratio",
    "Annual Volatility (%)",
    "Maximum Drawdown (%)",
];

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub report: PerfReport,
    /// One flag per indicator column, set when this row is best-in-column.
    pub best: [bool; 6],
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Builds the comparison table: deterministic row order, best-per-column
/// flags (highest return/Sharpe/Calmar, lowest volatility, shallowest
/// drawdown). Ties flag every achieving row.
pub fn compare(reports: &[(String, PerfReport)]) -> Result<Comparison> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to compare".into()));
    }
    let mut ordered: Vec<(String, PerfReport)> = reports.to_vec();
    ordered.sort_by_key(|(name, _)| (row_rank(name), name.clone()));

    let column = |r: &PerfReport, c: usize| -> f64 {
        match c {
            0 => r.cumulative_return_pct,
            1 => r.annualized_return_pct,
            2 => r.sharpe,
            3 => r.calmar,
            4 => -r.annual_volatility_pct, // lower is better
            _ => r.max_drawdown_pct,       // closer to zero is better
        }
    };
    let mut best_vals = [f64::NEG_INFINITY; 6];
    for (_, r) in &ordered {
        for (c, best) in best_vals.iter_mut().enumerate() {
            *best = best.max(column(r, c));
        }
    }
    let rows = ordered
        .into_iter()
        .map(|(name, report)| {
            let mut best = [false; 6];
            for (c, flag) in best.iter_mut().enumerate() {
                *flag = column(&report, c) == best_vals[c];
            }
            ComparisonRow { name, report, best }
        })
        .collect();
    Ok(Comparison { rows })
}

impl Comparison {
    /// Aligned plain-text table; best-in-column entries are starred.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<24}", "Strategy"));
        for col in INDICATOR_COLUMNS {
            out.push_str(&format!("{col:>24}"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(24 + 24 * 6));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<24}", row.name));
            let r = &row.report;
            let cells = [
                format!("{:.4}", r.cumulative_return_pct),
                format!("{:.4}", r.annualized_return_pct),
                format!("{:.4}", r.sharpe),
                if r.calmar.is_finite() {
                    format!("{:.4}", r.calmar)
                } else {
                    "inf".to_string()
                },
                format!("{:.4}", r.annual_volatility_pct),
                format!("{:.4}", r.max_drawdown_pct),
            ];
            for (cell, flag) in cells.iter().zip(row.best) {
                let marked = if flag { format!("*{cell}") } else { cell.clone() };
                out.push_str(&format!("{marked:>24}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(values: &[f64]) -> EquityCurve {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        EquityCurve::new(
            (0..values.len())
                .map(|i| start + chrono::Duration::days(i as i64))
                .collect(),
            values.to_vec(),
        )
        .unwrap()
    }

    fn report(ann_pct: f64, mdd_pct: f64) -> PerfReport {
        PerfReport {
            cumulative_return_pct: ann_pct,
            annualized_return_pct: ann_pct,
            sharpe: 1.0,
            calmar: ann_pct / mdd_pct.abs(),
            annual_volatility_pct: 10.0,
            max_drawdown_pct: mdd_pct,
            zero_variance: false,
        }
    }

    #[test]
    fn flat_curve_conventions() {
        let r = evaluate(&curve(&[100.0; 10])).unwrap();
        assert_eq!(r.cumulative_return_pct, 0.0);
        assert_eq!(r.annual_volatility_pct, 0.0);
        assert_eq!(r.max_drawdown_pct, 0.0);
        assert_eq!(r.sharpe, 0.0);
        assert!(r.zero_variance);
        assert!(r.calmar.is_infinite());
    }

    #[test]
    fn published_calmar_is_reproduced() {
        // annualized 34.7101%, drawdown -15.7598% => Calmar 2.2024.
        let calmar = 34.7101f64 / 15.7598;
        assert!((calmar - 2.2024).abs() < 0.001, "calmar {calmar}");
    }

    #[test]
    fn three_point_curve_hand_arithmetic() {
        let r = evaluate(&curve(&[100.0, 110.0, 99.0])).unwrap();
        assert!((r.cumulative_return_pct + 1.0).abs() < 1e-9);
        assert!((r.max_drawdown_pct + 10.0).abs() < 1e-9);
    }

    #[test]
    fn single_point_curve_is_an_error() {
        assert!(evaluate(&curve(&[100.0])).is_err());
    }

    #[test]
    fn scale_invariance_is_exact() {
        let values = [100.0, 104.0, 101.0, 108.0, 95.0, 99.0];
        let scaled: Vec<f64> = values.iter().map(|v| v * 1e4).collect();
        let a = evaluate(&curve(&values)).unwrap();
        let b = evaluate(&curve(&scaled)).unwrap();
        assert_eq!(a.cumulative_return_pct, b.cumulative_return_pct);
        assert_eq!(a.sharpe, b.sharpe);
        assert_eq!(a.max_drawdown_pct, b.max_drawdown_pct);
        assert_eq!(a.annual_volatility_pct, b.annual_volatility_pct);
    }

    #[test]
    fn calmar_identity_holds() {
        let r = evaluate(&curve(&[100.0, 104.0, 101.0, 108.0, 95.0, 99.0])).unwrap();
        let expect = r.annualized_return_pct / r.max_drawdown_pct.abs();
        assert!((r.calmar - expect).abs() < 1e-9);
    }

    #[test]
    fn drawdown_bounds() {
        assert_eq!(max_drawdown(&[1.0, 2.0, 3.0]), 0.0);
        let mdd = max_drawdown(&[100.0, 50.0, 75.0, 10.0]);
        assert!((-1.0..=0.0).contains(&mdd));
        assert!((mdd + 0.9).abs() < 1e-12);
    }

    #[test]
    fn cumulative_series_normalizes() {
        let c = curve(&[100.0, 150.0, 200.0]);
        let series = cumulative_series(&c);
        assert_eq!(series[0].1, 0.0);
        assert!((series[2].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sharpe_converges_on_iid_normal_returns() {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let (mu, sigma, n) = (0.0004, 0.01, 10_000usize);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(88);
        let mut values = vec![1_000_000.0];
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let r = mu + sigma * z;
            values.push(values.last().unwrap() * (1.0 + r));
        }
        let r = evaluate(&curve(&values)).unwrap();
        let expect = mu / sigma * TRADING_DAYS_PER_YEAR.sqrt();
        // Standard error of the annualized Sharpe estimate is ~sqrt(1/n)
        // in daily units, scaled by sqrt(252).
        let se = (1.0 / n as f64).sqrt() * TRADING_DAYS_PER_YEAR.sqrt();
        assert!(
            (r.sharpe - expect).abs() < 3.0 * se,
            "sharpe {} vs {expect} (se {se})",
            r.sharpe
        );
    }

    #[test]
    fn single_report_gets_all_flags() {
        let cmp = compare(&[("darl".into(), report(10.0, -5.0))]).unwrap();
        assert_eq!(cmp.rows.len(), 1);
        assert!(cmp.rows[0].best.iter().all(|b| *b));
    }

    #[test]
    fn dominating_report_takes_all_flags() {
        let a = full(20.0, 12.0, 1.5, 2.0, 8.0, -6.0);
        let b = full(10.0, 6.0, 0.7, 0.5, 12.0, -12.0);
        let cmp = compare(&[("olmar".into(), b), ("darl".into(), a)]).unwrap();
        assert_eq!(cmp.rows[0].name, "darl");
        assert!(cmp.rows[0].best.iter().all(|f| *f));
        assert!(cmp.rows[1].best.iter().all(|f| !*f));
    }

    #[test]
    fn published_table_flags_match_bolding() {
        // Re-entering the published indicator values: the proposed row wins
        // cumulative/annualized/Sharpe/Calmar; the mean-variance baseline
        // wins volatility and drawdown.
        let rows = vec![
            ("darl".to_string(), full(59.5253, 34.7101, 1.9096, 2.2024, 16.3058, -15.7598)),
            ("without-augmentation".to_string(), full(49.4439, 29.2149, 1.5172, 1.4385, 17.9649, -20.3080)),
            ("finrl-ppo".to_string(), full(46.2286, 27.4344, 1.5411, 1.3961, 16.6335, -19.6496)),
            ("olmar".to_string(), full(11.8773, 7.5214, 0.4097, 0.2455, 25.6876, -30.6370)),
            ("hybrid-ga".to_string(), full(34.5056, 20.8184, 1.2623, 1.2403, 15.9922, -16.7852)),
            ("markowitz".to_string(), full(24.6485, 15.1333, 1.1246, 1.2754, 13.3178, -11.8651)),
            ("index".to_string(), full(17.8874, 11.0694, 0.7717, 0.6762, 15.0674, -16.3692)),
        ];
        let cmp = compare(&rows).unwrap();
        let by_name = |n: &str| cmp.rows.iter().find(|r| r.name == n).unwrap();
        let darl = by_name("darl");
        assert!(darl.best[0] && darl.best[1] && darl.best[2] && darl.best[3]);
        assert!(!darl.best[4] && !darl.best[5]);
        let markowitz = by_name("markowitz");
        assert!(markowitz.best[4] && markowitz.best[5]);
        // Row order: proposed first, index last.
        assert_eq!(cmp.rows[0].name, "darl");
        assert_eq!(cmp.rows.last().unwrap().name, "index");
    }

    fn full(c: f64, a: f64, s: f64, cal: f64, v: f64, m: f64) -> PerfReport {
        PerfReport {
            cumulative_return_pct: c,
            annualized_return_pct: a,
            sharpe: s,
            calmar: cal,
            annual_volatility_pct: v,
            max_drawdown_pct: m,
            zero_variance: false,
        }
    }

    #[test]
    fn text_rendering_contains_all_rows() {
        let cmp = compare(&[
            ("darl".into(), report(10.0, -5.0)),
            ("index".into(), report(5.0, -8.0)),
        ])
        .unwrap();
        let text = cmp.render_text();
        assert!(text.contains("darl"));
        assert!(text.contains("index"));
        assert!(text.contains("Sharpe"));
    }
}
