use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Length-weighted penalty parameters: sharpness `alpha` and suggested
/// response length `suggested_len` in tokens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthPenaltyConfig {
    pub alpha: f64,
    pub suggested_len: usize,
}

impl Default for LengthPenaltyConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            suggested_len: 4,
        }
    }
}

impl LengthPenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("length penalty alpha must be positive"));
        }
        if self.suggested_len == 0 {
            return Err(Error::invalid("suggested length must be at least 1"));
        }
        Ok(())
    }
}

/// `1 / (1 + exp(alpha * (l - sl) - 6))` for the 1-based response position `l`.
pub fn lwp(l: usize, cfg: &LengthPenaltyConfig) -> f64 {
    debug_assert!(l >= 1, "positions are 1-based");
    let x = cfg.alpha * (l as f64 - cfg.suggested_len as f64) - 6.0;
    1.0 / (1.0 + x.exp())
}

/// Scales the reward at response position `t` (0-based) by `lwp(t + 1)`.
pub fn apply_length_penalty(rewards: &[f64], cfg: &LengthPenaltyConfig) -> Vec<f64> {
    rewards
        .iter()
        .enumerate()
        .map(|(t, r)| lwp(t + 1, cfg) * r)
        .collect()
}
