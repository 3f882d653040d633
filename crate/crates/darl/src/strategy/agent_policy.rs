//! Adapter exposing a trained policy as a strategy: assemble the MDP
//! observation from the view, run the mean net deterministically, softmax
//! onto the simplex.

use super::{MarketView, Strategy};
use crate::agent::PolicyParams;
use crate::env::{project_to_simplex, EnvConfig};
use crate::error::Result;

pub struct AgentStrategy {
    name: String,
    policy: PolicyParams,
    env_cfg: EnvConfig,
}

impl AgentStrategy {
    pub fn new(name: impl Into<String>, policy: PolicyParams, env_cfg: EnvConfig) -> Self {
        AgentStrategy {
            name: name.into(),
            policy,
            env_cfg,
        }
    }
}

impl Strategy for AgentStrategy {
    fn name(&self) -> &str {
        &self.name
    }

    fn target_weights(&mut self, view: &MarketView<'_>) -> Result<Vec<f64>> {
        let obs = view.observation(&self.env_cfg)?;
        let mu = self.policy.mean_net.output(obs.as_slice())?;
        Ok(project_to_simplex(&mu).as_slice().to_vec())
    }
}
