//! Diffusion-augmented reinforcement learning for portfolio allocation.
//!
//! The pipeline: ingest daily closes into a [`market_data::PriceTable`],
//! extract labeled return windows, train a conditional denoising diffusion
//! model ([`diffusion`]) that generates crash scenarios at a chosen
//! intensity, and use those scenarios to augment the episode stream of a
//! PPO agent ([`agent`]) trading in a transaction-cost-aware portfolio
//! environment ([`env`]). Baseline allocators live behind a common
//! [`strategy::Strategy`] trait and share the same cost engine, so
//! backtest comparisons ([`backtest`]) are apples-to-apples.

pub mod agent;
pub mod augmentation;
pub mod backtest;
pub mod diffusion;
pub mod env;
pub mod error;
pub mod market_data;
pub mod nn;
pub mod strategy;
pub mod util;

pub use error::{Error, Result};
