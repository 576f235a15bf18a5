use super::{argmax_category, RMOutput, ValidSet};
use crate::datagen::{RewardCategory, TokenBatch};

/// ROC-AUC of `positives` against `negatives` with mid-rank ties
/// (Mann-Whitney). `None` when either side is empty.
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> Option<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// AUC of `P(2) / (P(1) + P(2))` for relevant versus irrelevant valid tokens.
pub fn rm_auc(out: &RMOutput, batch: &TokenBatch, vs: &ValidSet) -> Option<f64> {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for i in 0..batch.n_episodes() {
        for t in vs.positions(i) {
            let p = out.class_probs[i][t];
            let denom = p[1] + p[2];
            let score = if denom > 0.0 { p[2] / denom } else { 0.5 };
            match batch.token_categories[i][t] {
                RewardCategory::Relevant => pos.push(score),
                RewardCategory::Irrelevant => neg.push(score),
                RewardCategory::Masked => {}
            }
        }
    }
    roc_auc(&pos, &neg)
}

/// Share of valid tokens whose argmax matches the label.
pub fn token_accuracy(out: &RMOutput, batch: &TokenBatch, vs: &ValidSet) -> Option<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for i in 0..batch.n_episodes() {
        for t in vs.positions(i) {
            n += 1;
            if argmax_category(&out.class_probs[i][t]) == batch.token_categories[i][t] {
                hit += 1;
            }
        }
    }
    (n > 0).then(|| hit as f64 / n as f64)
}
