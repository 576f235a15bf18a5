use super::{AdvantageMode, TPPOConfig};
use crate::policy::{EpisodeRollout, Rollout};

/// Discounted returns `G_t = R_t + gamma * G_{t+1}`, zero past the end.
pub fn episode_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    out
}

fn episode_advantages(ep: &mut EpisodeRollout, cfg: &TPPOConfig) {
    ep.returns = episode_returns(&ep.rewards, cfg.gamma);
    ep.advantages = match cfg.advantage_mode {
        AdvantageMode::MonteCarlo => ep.returns.iter().zip(&ep.values).map(|(g, v)| g - v).collect(),
        AdvantageMode::Gae => {
            let n = ep.rewards.len();
            let mut adv = vec![0.0; n];
            let mut next_adv = 0.0;
            for t in (0..n).rev() {
                let next_v = if t + 1 < n { ep.values[t + 1] } else { 0.0 };
                let delta = ep.rewards[t] + cfg.gamma * next_v - ep.values[t];
                next_adv = delta + cfg.gamma * cfg.lambda_gae * next_adv;
                adv[t] = next_adv;
            }
            adv
        }
    };
}

/// Fills returns and advantages of every episode, then optionally centers the
/// advantages on their batch mean.
pub fn compute_advantages(rollout: &mut Rollout, cfg: &TPPOConfig) {
    for ep in &mut rollout.episodes {
        episode_advantages(ep, cfg);
    }
    if cfg.center_advantages {
        let n: usize = rollout.episodes.iter().map(|e| e.advantages.len()).sum();
        if n > 0 {
            let mean = rollout.episodes.iter().flat_map(|e| &e.advantages).sum::<f64>() / n as f64;
            for a in rollout.episodes.iter_mut().flat_map(|e| &mut e.advantages) {
                *a -= mean;
            }
        }
    }
}
