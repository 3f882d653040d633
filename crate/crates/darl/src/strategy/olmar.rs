//! Moving-average reversion: predict next price relatives from the ratio
//! of a short moving average to today's close, then take the smallest
//! step (in L2) that pushes the predicted portfolio relative past the
//! reversion margin ε, projected back onto the simplex.

use super::simplex::project_euclidean;
use super::{MarketView, Strategy};
use crate::error::Result;

pub struct Olmar {
    epsilon: f64,
    ma_window: usize,
    previous: Option<Vec<f64>>,
}

impl Olmar {
    pub fn new(epsilon: f64, ma_window: usize) -> Self {
        Olmar {
            epsilon,
            ma_window,
            previous: None,
        }
    }
}

impl Strategy for Olmar {
    fn name(&self) -> &str {
        "olmar"
    }

    fn reset(&mut self) {
        self.previous = None;
    }

    fn target_weights(&mut self, view: &MarketView<'_>) -> Result<Vec<f64>> {
        let closes = view.closes();
        if closes.len() < self.ma_window {
            return Err(crate::error::Error::InvalidArgument(format!(
                "moving average window {} not available at index {}",
                self.ma_window,
                view.today()
            )));
        }
        let n = view.n_assets();
        let prev = match &self.previous {
            Some(w) => w.clone(),
            None => {
                let w = vec![1.0 / n as f64; n];
                self.previous = Some(w.clone());
                return Ok(w);
            }
        };
        let today = &closes[closes.len() - 1];
        let mut relatives = vec![0.0; n];
        for i in 0..n {
            let ma: f64 = closes[closes.len() - self.ma_window..]
                .iter()
                .map(|row| row[i])
                .sum::<f64>()
                / self.ma_window as f64;
            relatives[i] = ma / today[i];
        }
        let w = olmar_update(&prev, &relatives, self.epsilon);
        self.previous = Some(w.clone());
        Ok(w)
    }
}

/// One passive-aggressive reversion step:
/// τ = max(0, (ε − w·x̃) / ‖x̃ − x̄·1‖²), w' = Π(w + τ(x̃ − x̄·1)).
pub fn olmar_update(weights: &[f64], predicted_relatives: &[f64], epsilon: f64) -> Vec<f64> {
    let n = weights.len() as f64;
    let x_bar: f64 = predicted_relatives.iter().sum::<f64>() / n;
    let centered: Vec<f64> = predicted_relatives.iter().map(|x| x - x_bar).collect();
    let denom: f64 = centered.iter().map(|d| d * d).sum();
    if denom < 1e-12 {
        return weights.to_vec();
    }
    let margin: f64 = weights
        .iter()
        .zip(predicted_relatives)
        .map(|(w, x)| w * x)
        .sum();
    let tau = ((epsilon - margin) / denom).max(0.0);
    if tau == 0.0 {
        return weights.to_vec();
    }
    let stepped: Vec<f64> = weights
        .iter()
        .zip(&centered)
        .map(|(w, d)| w + tau * d)
        .collect();
    project_euclidean(&stepped)
}
