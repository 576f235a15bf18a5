use super::{expected_category, RMOutput, RMParams, ValidSet};
use crate::datagen::TokenBatch;
use crate::nn::{context_window, softmax, softmax_backward};

pub const PROB_FLOOR: f64 = 1e-12;

/// Which token reward enters the sentence-consistency loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlobalVariant {
    /// `sum_c c * P(c)`; differentiable, used for training.
    Expected,
    /// Argmax category, as used for evaluation.
    Argmax,
}

/// Weighted cross-entropy over the valid set, divided by the number of
/// episodes. An empty valid set yields 0.
pub fn local_loss(out: &RMOutput, batch: &TokenBatch, vs: &ValidSet, class_weights: &[f64; 3]) -> f64 {
    let n = batch.n_episodes();
    if n == 0 || vs.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for t in vs.positions(i) {
            let c = batch.token_categories[i][t].index();
            sum -= class_weights[c] * out.class_probs[i][t][c].max(PROB_FLOOR).ln();
        }
    }
    sum / n as f64
}

/// Mean over episodes of the squared gap between the mean valid-token reward
/// and the sentence reward. Episodes without valid tokens are left out.
pub fn global_loss(out: &RMOutput, batch: &TokenBatch, vs: &ValidSet, variant: GlobalVariant) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..batch.n_episodes() {
        let (mut acc, mut count) = (0.0, 0usize);
        for t in vs.positions(i) {
            acc += match variant {
                GlobalVariant::Expected => out.expected_reward[i][t],
                GlobalVariant::Argmax => out.predicted_category[i][t].value(),
            };
            count += 1;
        }
        if count == 0 {
            continue;
        }
        let r = acc / count as f64 - batch.sentence_rewards[i].value();
        sum += r * r;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn total_loss(local: f64, global: f64, lambda_local: f64, lambda_global: f64) -> f64 {
    lambda_local * local + lambda_global * global
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub local: f64,
    pub global: f64,
    pub total: f64,
}

/// Training-variant total loss and its gradient with respect to the
/// flattened reward-model parameters.
pub fn loss_and_grad(
    params: &RMParams,
    batch: &TokenBatch,
    vs: &ValidSet,
    class_weights: &[f64; 3],
    lambda_local: f64,
    lambda_global: f64,
) -> (LossParts, Vec<f64>) {
    let net = &params.net;
    let k = params.k_ctx();
    let n = batch.n_episodes();
    let mut grad = vec![0.0; net.params.len()];
    let episodes_with_tokens = (0..n).filter(|&i| vs.positions(i).next().is_some()).count();
    let (mut local, mut global) = (0.0, 0.0);

    for i in 0..n {
        let row = &batch.token_ids[i];
        let positions: Vec<usize> = vs.positions(i).collect();
        if positions.is_empty() {
            continue;
        }
        let acts: Vec<_> = positions
            .iter()
            .map(|&t| net.forward(&context_window(row, t + 1, k)))
            .collect();
        let probs: Vec<Vec<f64>> = acts.iter().map(|a| softmax(&a.outputs[0])).collect();
        let mean_reward = probs
            .iter()
            .map(|p| expected_category(&[p[0], p[1], p[2]]))
            .sum::<f64>()
            / positions.len() as f64;
        let resid = mean_reward - batch.sentence_rewards[i].value();
        global += resid * resid;
        let d_expected = lambda_global * 2.0 * resid / (positions.len() as f64 * episodes_with_tokens as f64);

        for ((&t, act), p) in positions.iter().zip(&acts).zip(&probs) {
            let c = batch.token_categories[i][t].index();
            let w = class_weights[c];
            local -= w * p[c].max(PROB_FLOOR).ln();
            // d/dp of the local term, then of the global term through E = p1 + 2 p2
            let mut d_p = [0.0, d_expected, 2.0 * d_expected];
            if p[c] > PROB_FLOOR {
                d_p[c] -= lambda_local * w / (n as f64 * p[c]);
            }
            let d_logits = softmax_backward(p, &d_p);
            net.backward(act, &[Some(&d_logits)], &mut grad);
        }
    }
    let local = if n == 0 { 0.0 } else { local / n as f64 };
    let global = if episodes_with_tokens == 0 {
        0.0
    } else {
        global / episodes_with_tokens as f64
    };
    let parts = LossParts {
        local,
        global,
        total: total_loss(local, global, lambda_local, lambda_global),
    };
    (parts, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::RewardCategory::{self, *};
    use crate::reward_model::{build_valid_set, rm_forward, RmArch};
    use crate::seed;

    /// One episode, prompt [3], response tokens with the given categories.
    fn one_episode(cats: &[RewardCategory], sentence: RewardCategory) -> TokenBatch {
        let mut b = TokenBatch::from_sequences(&[vec![3]], &[vec![10; cats.len()]]);
        b.token_categories[0][1..].copy_from_slice(cats);
        b.sentence_rewards[0] = sentence;
        b
    }

    fn output_with(b: &TokenBatch, triple: [f64; 3]) -> RMOutput {
        RMOutput::from_probs(b.token_ids.iter().map(|r| vec![triple; r.len()]).collect())
    }

    const UNIT: [f64; 3] = [1.0, 1.0, 1.0];

    #[test]
    fn local_loss_examples() {
        let b = one_episode(&[Relevant], Relevant);
        let vs = build_valid_set(&b, 0);
        assert_eq!(local_loss(&output_with(&b, [0.0, 0.0, 1.0]), &b, &vs, &UNIT), 0.0);

        let b = one_episode(&[Irrelevant], Irrelevant);
        let vs = build_valid_set(&b, 0);
        let uni = output_with(&b, [1.0 / 3.0; 3]);
        let l = local_loss(&uni, &b, &vs, &UNIT);
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!((l - 1.0986).abs() < 1e-4);
        let doubled = local_loss(&uni, &b, &vs, &[1.0, 2.0, 1.0]);
        assert!((doubled - 2.0 * l).abs() < 1e-12);
    }

    #[test]
    fn local_loss_floor_guards_zero_probability() {
        let b = one_episode(&[Relevant], Relevant);
        let vs = build_valid_set(&b, 0);
        let l = local_loss(&output_with(&b, [0.5, 0.5, 0.0]), &b, &vs, &UNIT);
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn empty_valid_set_gives_zero() {
        let b = one_episode(&[Relevant], Relevant);
        let mut vs = build_valid_set(&b, 0);
        vs.membership[0].fill(false);
        vs.kept_counts = [0; 3];
        vs.empty = true;
        let o = output_with(&b, [0.2, 0.3, 0.5]);
        assert_eq!(local_loss(&o, &b, &vs, &UNIT), 0.0);
        assert_eq!(global_loss(&o, &b, &vs, GlobalVariant::Expected), 0.0);
    }

    #[test]
    fn global_loss_examples() {
        let b = one_episode(&[Relevant, Relevant], Relevant);
        let vs = build_valid_set(&b, 0);
        assert_eq!(global_loss(&output_with(&b, [0.1, 0.2, 0.7]), &b, &vs, GlobalVariant::Argmax), 0.0);
        let g = global_loss(&output_with(&b, [0.0, 0.5, 0.5]), &b, &vs, GlobalVariant::Expected);
        assert!((g - 0.25).abs() < 1e-12);

        let b = one_episode(&[Irrelevant, Relevant, Masked], Irrelevant);
        let vs = build_valid_set(&b, 0);
        let mut o = output_with(&b, [0.0, 1.0, 0.0]);
        // mean of (0, 2, 1) equals the sentence reward 1
        o.class_probs[0][1] = [1.0, 0.0, 0.0];
        o.class_probs[0][2] = [0.0, 0.0, 1.0];
        let o = RMOutput::from_probs(o.class_probs);
        assert!(global_loss(&o, &b, &vs, GlobalVariant::Expected).abs() < 1e-15);
        assert!(global_loss(&o, &b, &vs, GlobalVariant::Argmax).abs() < 1e-15);
    }

    #[test]
    fn total_loss_mixes() {
        assert_eq!(total_loss(2.0, 0.25, 1.0, 0.0), 2.0);
        assert_eq!(total_loss(2.0, 0.25, 0.0, 1.0), 0.25);
        assert!((total_loss(2.0, 0.25, 0.5, 0.5) - 1.125).abs() < 1e-15);
    }

    #[test]
    fn gradient_parts_agree_with_loss_functions() {
        let p = RMParams::init(16, &RmArch { d_embed: 4, k_ctx: 5, hidden: 6 }, &mut seed::rng(2, 0));
        let mut b = TokenBatch::from_sequences(&[vec![3, 4], vec![5]], &[vec![10, 11, 12], vec![13, 1]]);
        b.token_categories[0][2..5].copy_from_slice(&[Relevant, Masked, Irrelevant]);
        b.token_categories[1][1..3].copy_from_slice(&[Relevant, Masked]);
        b.sentence_rewards = vec![Relevant, Irrelevant];
        let vs = build_valid_set(&b, 0);
        let w = [0.2, 1.0, 1.0];
        let (parts, _) = loss_and_grad(&p, &b, &vs, &w, 0.5, 0.5);
        let out = rm_forward(&p, &b).unwrap();
        assert!((parts.local - local_loss(&out, &b, &vs, &w)).abs() < 1e-12);
        assert!((parts.global - global_loss(&out, &b, &vs, GlobalVariant::Expected)).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn argmax_global_ignores_confidence(
            raw in proptest::collection::vec((0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0), 4),
            sharpen in 1.0f64..5.0,
        ) {
            let b = one_episode(&[Relevant, Irrelevant, Masked, Relevant], Relevant);
            let vs = build_valid_set(&b, 0);
            let norm = |(a, c, d): (f64, f64, f64), s: f64| {
                let (a, c, d) = (a.powf(s), c.powf(s), d.powf(s));
                let z = a + c + d;
                [a / z, c / z, d / z]
            };
            let make = |s: f64| {
                let mut rows = vec![[1.0 / 3.0; 3]; b.width()];
                for (t, r) in raw.iter().enumerate() {
                    rows[t + 1] = norm(*r, s);
                }
                RMOutput::from_probs(vec![rows])
            };
            // powers preserve the ordering of the entries, hence the argmax
            let base = global_loss(&make(1.0), &b, &vs, GlobalVariant::Argmax);
            let sharp = global_loss(&make(sharpen), &b, &vs, GlobalVariant::Argmax);
            proptest::prop_assert_eq!(base, sharp);
        }

        #[test]
        fn local_loss_nonnegative(raw in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 3)) {
            let b = one_episode(&[Relevant, Irrelevant, Masked], Relevant);
            let vs = build_valid_set(&b, 0);
            let mut rows = vec![[1.0 / 3.0; 3]; b.width()];
            for (t, (a, c, d)) in raw.iter().enumerate() {
                let z = a + c + d + 1e-9;
                rows[t + 1] = [a / z, c / z, d / z];
            }
            let l = local_loss(&RMOutput::from_probs(vec![rows]), &b, &vs, &UNIT);
            proptest::prop_assert!(l >= 0.0);
        }
    }
}
