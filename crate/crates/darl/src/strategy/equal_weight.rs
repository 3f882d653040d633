//! 1/N, rebalanced daily through the cost engine.

use super::{MarketView, Strategy};
use crate::error::Result;

pub struct EqualWeight;

impl Strategy for EqualWeight {
    fn name(&self) -> &str {
        "equal-weight"
    }

    fn target_weights(&mut self, view: &MarketView<'_>) -> Result<Vec<f64>> {
        let n = view.n_assets();
        Ok(vec![1.0 / n as f64; n])
    }
}
