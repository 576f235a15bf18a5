//! Token-level PPO: per-token advantages, the clipped surrogate, the training
//! loop (token or sentence reward placement) and the exact tabular solution
//! of the KL-regularized advantage objective.

mod advantage;
mod objective;
mod tabular;
mod train;

use serde::{Deserialize, Serialize};

use crate::reward_model::LengthPenaltyConfig;
use crate::{Error, Result};

pub use advantage::{compute_advantages, episode_returns};
pub use objective::{clipped_objective, ppo_loss_and_grad, ppo_ratio, PpoLossConfig, PpoLossParts, RATIO_LOG_CLAMP};
pub use tabular::{
    closed_form_optimal_policy, kl_divergence, kl_regularized_objective, log_partition, stationarity_residuals,
    verify_candidate, verify_lemma1, LemmaOptions, LemmaReport, LemmaViolation, TabularInstance,
};
pub use train::{rollout_batch, train_tppo, train_tppo_with, PromptSet, TppoOutcome, TppoRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    MonteCarlo,
    Gae,
}

/// Where the reward signal lands in a response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Every token receives its own (length-penalized) reward.
    Token,
    /// One sentence reward on the final token, zero elsewhere.
    Sentence,
}

impl std::fmt::Display for RewardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RewardMode::Token => "token",
            RewardMode::Sentence => "sentence",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TPPOConfig {
    pub clip_eps: f64,
    /// Per-token KL penalty against the initial policy.
    pub beta: f64,
    pub gamma: f64,
    pub lambda_gae: f64,
    pub advantage_mode: AdvantageMode,
    pub center_advantages: bool,
    pub reward_mode: RewardMode,
    /// Scalar reward of categories 0, 1 and 2.
    pub category_rewards: [f64; 3],
    pub length_penalty: LengthPenaltyConfig,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub iterations: usize,
    pub batch_episodes: usize,
    pub minibatch_episodes: usize,
    pub max_len: usize,
    pub temperature: f64,
    /// Early stop once the mean per-episode KL to the initial policy exceeds this.
    pub kl_stop: f64,
    pub seed: u64,
}

impl Default for TPPOConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            beta: 0.05,
            gamma: 1.0,
            lambda_gae: 0.95,
            advantage_mode: AdvantageMode::MonteCarlo,
            center_advantages: true,
            reward_mode: RewardMode::Token,
            category_rewards: [0.0, -1.0, 1.0],
            length_penalty: LengthPenaltyConfig::default(),
            value_coef: 0.5,
            entropy_coef: 0.01,
            epochs: 4,
            lr: 1e-3,
            max_grad_norm: 1.0,
            iterations: 200,
            batch_episodes: 32,
            minibatch_episodes: 8,
            max_len: 16,
            temperature: 1.0,
            kl_stop: 50.0,
            seed: 0,
        }
    }
}

impl TPPOConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::invalid("clip epsilon must lie in (0, 1)"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::invalid("beta must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.lambda_gae) {
            return Err(Error::invalid("lambda_gae must lie in [0, 1]"));
        }
        if self.epochs == 0 || self.batch_episodes == 0 || self.minibatch_episodes == 0 || self.max_len == 0 {
            return Err(Error::invalid("epochs, batch sizes and max_len must be positive"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        self.length_penalty.validate()
    }

    pub fn loss_config(&self) -> PpoLossConfig {
        PpoLossConfig {
            clip_eps: self.clip_eps,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_ranges() {
        assert!(TPPOConfig::default().validate().is_ok());
        for bad in [
            TPPOConfig { clip_eps: 1.0, ..Default::default() },
            TPPOConfig { beta: 0.0, ..Default::default() },
            TPPOConfig { gamma: 0.0, ..Default::default() },
            TPPOConfig { lambda_gae: 1.5, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
