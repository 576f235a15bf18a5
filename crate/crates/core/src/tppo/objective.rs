use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::{log_softmax, softmax};
use crate::policy::{EpisodeRollout, PolicyParams, POLICY_HEAD, VALUE_HEAD};

/// Bound on `|log r|` before exponentiation.
pub const RATIO_LOG_CLAMP: f64 = 20.0;

/// `pi_new(a|s) / pi_ref(a|s)` from log-probabilities, with the exponent clamped.
pub fn ppo_ratio(logp_new: f64, logp_ref: f64) -> f64 {
    (logp_new - logp_ref).clamp(-RATIO_LOG_CLAMP, RATIO_LOG_CLAMP).exp()
}

/// `min(r * A, clip(r, 1 - eps, 1 + eps) * A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    unclipped.min(clipped)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoLossConfig {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoLossParts {
    /// Negated clipped surrogate, averaged over tokens.
    pub policy: f64,
    /// `0.5 * (V - G)^2`, averaged over tokens.
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    /// Mean of `log pi_ref - log pi_new` over tokens.
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Tokens whose log-ratio hit the clamp.
    pub ratio_overflows: usize,
}

/// Token-averaged loss `-surrogate + c_v * value_loss - c_e * entropy` and its
/// gradient. Each token uses its episode's `behavior_logp` as the reference
/// and `advantages` / `returns` as fixed targets.
pub fn ppo_loss_and_grad(
    params: &PolicyParams,
    episodes: &[EpisodeRollout],
    cfg: &PpoLossConfig,
) -> (PpoLossParts, Vec<f64>) {
    let n_tokens: usize = episodes.iter().map(EpisodeRollout::len).sum();
    let np = params.n_params();
    if n_tokens == 0 {
        return (PpoLossParts::default(), vec![0.0; np]);
    }
    let scale = 1.0 / n_tokens as f64;
    let per_episode: Vec<(PpoLossParts, Vec<f64>)> = episodes
        .par_iter()
        .map(|ep| {
            let mut parts = PpoLossParts::default();
            let mut grad = vec![0.0; np];
            let seq = ep.sequence();
            for t in 0..ep.len() {
                let act = params.forward_state(&seq, ep.prompt.len() + t);
                let logits = &act.outputs[POLICY_HEAD];
                let logp = log_softmax(logits);
                let p = softmax(logits);
                let a = ep.actions[t];
                let adv = ep.advantages[t];
                let log_ratio = logp[a] - ep.behavior_logp[t];
                let overflow = log_ratio.abs() > RATIO_LOG_CLAMP;
                let r = ppo_ratio(logp[a], ep.behavior_logp[t]);
                let unclipped = r * adv;
                let clipped = r.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
                parts.policy -= unclipped.min(clipped);
                if (r - r.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)).abs() > 0.0 {
                    parts.clip_fraction += 1.0;
                }
                parts.approx_kl -= log_ratio;
                if overflow {
                    parts.ratio_overflows += 1;
                }
                let entropy: f64 = -p.iter().zip(&logp).map(|(pi, lp)| pi * lp).sum::<f64>();
                parts.entropy += entropy;
                let v = act.outputs[VALUE_HEAD][0];
                let dv = v - ep.returns[t];
                parts.value += 0.5 * dv * dv;

                // d loss / d log pi(a): nonzero only where the unclipped branch is active
                let d_logp = if unclipped <= clipped && !overflow { -unclipped * scale } else { 0.0 };
                let d_logits: Vec<f64> = p
                    .iter()
                    .zip(&logp)
                    .enumerate()
                    .map(|(k, (&pk, &lpk))| {
                        let onehot = if k == a { 1.0 } else { 0.0 };
                        let d_entropy = -pk * (lpk + entropy);
                        d_logp * (onehot - pk) - cfg.entropy_coef * scale * d_entropy
                    })
                    .collect();
                let d_value = [cfg.value_coef * scale * dv];
                params
                    .net
                    .backward(&act, &[Some(&d_logits), Some(&d_value)], &mut grad);
            }
            (parts, grad)
        })
        .collect();

    let mut parts = PpoLossParts::default();
    let mut grad = vec![0.0; np];
    for (p, g) in per_episode {
        parts.policy += p.policy;
        parts.value += p.value;
        parts.entropy += p.entropy;
        parts.approx_kl += p.approx_kl;
        parts.clip_fraction += p.clip_fraction;
        parts.ratio_overflows += p.ratio_overflows;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    parts.policy *= scale;
    parts.value *= scale;
    parts.entropy *= scale;
    parts.approx_kl *= scale;
    parts.clip_fraction *= scale;
    parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
    (parts, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{sequence_log_probs, PolicyArch};
    use crate::seed;

    #[test]
    fn ratio_examples() {
        assert_eq!(ppo_ratio(-0.7, -0.7), 1.0);
        assert!((ppo_ratio(0.6f64.ln(), 0.3f64.ln()) - 2.0).abs() < 1e-12);
        assert!(ppo_ratio(-500.0, 0.0) > 0.0);
        assert!(ppo_ratio(500.0, 0.0).is_finite());
    }

    #[test]
    fn clipped_examples() {
        assert!((clipped_objective(1.5, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((clipped_objective(0.5, -1.0, 0.2) + 0.8).abs() < 1e-12);
        for eps in [0.05, 0.2, 0.9] {
            assert_eq!(clipped_objective(1.0, 0.37, eps), 0.37);
        }
    }

    proptest::proptest! {
        #[test]
        fn clipped_is_a_lower_bound(r in 0.01f64..5.0, a in -3.0f64..3.0, eps in 0.01f64..0.99) {
            let v = clipped_objective(r, a, eps);
            proptest::prop_assert!(v <= r * a + 1e-12);
            proptest::prop_assert!(v <= r.clamp(1.0 - eps, 1.0 + eps) * a + 1e-12);
        }
    }

    fn small_policy() -> PolicyParams {
        PolicyParams::init(
            10,
            &PolicyArch {
                d_embed: 3,
                k_ctx: 4,
                hidden: 5,
            },
            &mut seed::rng(1, 0),
        )
    }

    #[test]
    fn zero_advantage_has_no_policy_gradient() {
        let p = small_policy();
        let prompt = vec![3, 4];
        let actions = vec![5, 6, 1];
        let ep = EpisodeRollout {
            behavior_logp: sequence_log_probs(&p, &prompt, &actions)
                .iter()
                .map(|x| x - 0.1)
                .collect(),
            prompt,
            actions,
            advantages: vec![0.0; 3],
            returns: vec![1.0; 3],
            ..Default::default()
        };
        let cfg = PpoLossConfig {
            clip_eps: 0.2,
            value_coef: 0.0,
            entropy_coef: 0.0,
        };
        let (parts, grad) = ppo_loss_and_grad(&p, &[ep], &cfg);
        assert_eq!(parts.policy, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }
}
