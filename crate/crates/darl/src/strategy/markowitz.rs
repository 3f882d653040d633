//! Mean-variance allocation: maximize μᵀw − λ·wᵀΣw over the simplex by
//! projected gradient ascent from equal weights. Σ is the sample
//! covariance of the lookback block, ridge-regularized for well-posedness.

use super::simplex::project_euclidean;
use super::{MarketView, Strategy};
use crate::error::Result;

const PGA_ITERATIONS: usize = 500;
const PGA_STEP: f64 = 0.01;
const RIDGE: f64 = 1e-6;

pub struct Markowitz {
    lookback: usize,
    risk_aversion: f64,
}

impl Markowitz {
    pub fn new(lookback: usize, risk_aversion: f64) -> Self {
        Markowitz {
            lookback,
            risk_aversion,
        }
    }
}

impl Strategy for Markowitz {
    fn name(&self) -> &str {
        "markowitz"
    }

    fn target_weights(&mut self, view: &MarketView<'_>) -> Result<Vec<f64>> {
        let block = view.returns_block(self.lookback)?;
        Ok(markowitz_weights(block, self.risk_aversion))
    }
}

/// Projected gradient ascent on μᵀw − λ·wᵀΣw.
pub fn markowitz_weights(returns_block: &[Vec<f64>], risk_aversion: f64) -> Vec<f64> {
    let n = returns_block[0].len();
    let rows = returns_block.len() as f64;

    let mut mu = vec![0.0; n];
    for row in returns_block {
        for (m, r) in mu.iter_mut().zip(row) {
            *m += r;
        }
    }
    for m in &mut mu {
        *m /= rows;
    }

    let mut sigma = vec![vec![0.0; n]; n];
    if returns_block.len() > 1 {
        for row in returns_block {
            for i in 0..n {
                let di = row[i] - mu[i];
                for j in 0..n {
                    sigma[i][j] += di * (row[j] - mu[j]);
                }
            }
        }
        for row in sigma.iter_mut() {
            for v in row.iter_mut() {
                *v /= rows - 1.0;
            }
        }
    }
    for (i, row) in sigma.iter_mut().enumerate() {
        row[i] += RIDGE;
    }

    let mut w = vec![1.0 / n as f64; n];
    for _ in 0..PGA_ITERATIONS {
        let mut grad = mu.clone();
        for i in 0..n {
            let mut sw = 0.0;
            for j in 0..n {
                sw += sigma[i][j] * w[j];
            }
            grad[i] -= 2.0 * risk_aversion * sw;
        }
        for i in 0..n {
            w[i] += PGA_STEP * grad[i];
        }
        w = project_euclidean(&w);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_from_returns(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let rows = cols[0].len();
        (0..rows)
            .map(|t| cols.iter().map(|c| c[t]).collect())
            .collect()
    }

    #[test]
    fn symmetric_assets_split_evenly() {
        // Identical columns: any deviation from 0.5/0.5 is asymmetric.
        let col = vec![0.01, -0.02, 0.03, 0.0, -0.01, 0.02];
        let block = block_from_returns(&[col.clone(), col]);
        let w = markowitz_weights(&block, 10.0);
        assert!((w[0] - 0.5).abs() < 1e-6, "w = {w:?}");
        assert!((w[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn large_risk_aversion_matches_inverse_variance() {
        // Diagonal-Σ minimum variance: w_i ∝ 1/σ_i².
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows = 4000;
        let (s1, s2) = (0.01, 0.02);
        let a: Vec<f64> = (0..rows).map(|_| s1 * gauss(&mut rng)).collect();
        let b: Vec<f64> = (0..rows).map(|_| s2 * gauss(&mut rng)).collect();
        let block = block_from_returns(&[a, b]);
        // Large enough for the risk term to dominate, small enough
        // for the fixed-step ascent to stay stable.
        let w = markowitz_weights(&block, 5e4);
        // Expected ~ [0.8, 0.2] for sigma ratio 1:2.
        let expect = (1.0 / (s1 * s1)) / (1.0 / (s1 * s1) + 1.0 / (s2 * s2));
        assert!((w[0] - expect).abs() < 0.05, "w = {w:?}, expect {expect}");
        assert!(w[0] > w[1]);
    }

    fn gauss(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        use rand::Rng;
        // Sum of 12 uniforms, good enough for a variance fixture.
        (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0
    }

    #[test]
    fn higher_mean_attracts_weight() {
        let rows = 40;
        let a: Vec<f64> = (0..rows)
            .map(|t| 0.01 + 0.01 * if t % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let b: Vec<f64> = (0..rows)
            .map(|t| 0.0 + 0.01 * if t % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let block = block_from_returns(&[a, b]);
        let w = markowitz_weights(&block, 10.0);
        assert!(w[0] > w[1], "w = {w:?}");
    }
}
