use rand::seq::index::sample;

use crate::datagen::{RewardCategory, TokenBatch};
use crate::seed::{self, stream};

/// Positions that contribute to the reward-model losses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidSet {
    pub membership: Vec<Vec<bool>>,
    /// Kept tokens per class `[cat0, cat1, cat2]`.
    pub kept_counts: [usize; 3],
    /// Set when no position survived the masks.
    pub empty: bool,
}

impl ValidSet {
    pub fn len(&self) -> usize {
        self.kept_counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// Valid positions of row `i`.
    pub fn positions(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.membership[i]
            .iter()
            .enumerate()
            .filter_map(|(t, &m)| m.then_some(t))
    }
}

/// Applies the attention and activation masks, then thins the majority of
/// {irrelevant, relevant} uniformly without replacement until the ratio is
/// within 1:3 .. 3:1. Masked-category response tokens are always kept.
pub fn build_valid_set(batch: &TokenBatch, seed: u64) -> ValidSet {
    let mut membership: Vec<Vec<bool>> = batch
        .attention_mask
        .iter()
        .zip(&batch.activation_mask)
        .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x && y).collect())
        .collect();
    let mut by_class: [Vec<(usize, usize)>; 3] = Default::default();
    for (i, row) in membership.iter().enumerate() {
        for (t, &m) in row.iter().enumerate() {
            if m {
                by_class[batch.token_categories[i][t].index()].push((i, t));
            }
        }
    }
    let (n1, n2) = (by_class[1].len(), by_class[2].len());
    let mut kept_counts = [by_class[0].len(), n1, n2];
    if n1 > 0 && n2 > 0 {
        let (major, cap) = if n1 > 3 * n2 {
            (Some(RewardCategory::Irrelevant), 3 * n2)
        } else if n2 > 3 * n1 {
            (Some(RewardCategory::Relevant), 3 * n1)
        } else {
            (None, 0)
        };
        if let Some(c) = major {
            let pool = &by_class[c.index()];
            let mut rng = seed::rng(seed, stream::VALID_SET);
            let mut keep = vec![false; pool.len()];
            for k in sample(&mut rng, pool.len(), cap) {
                keep[k] = true;
            }
            for (&(i, t), k) in pool.iter().zip(keep) {
                membership[i][t] = k;
            }
            kept_counts[c.index()] = cap;
        }
    }
    let empty = kept_counts.iter().sum::<usize>() == 0;
    ValidSet {
        membership,
        kept_counts,
        empty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::TokenBatch;
    use RewardCategory::*;

    fn batch_with(cats: &[RewardCategory]) -> TokenBatch {
        let mut b = TokenBatch::from_sequences(&[vec![3]], &[vec![10; cats.len()]]);
        b.token_categories[0][1..].copy_from_slice(cats);
        b
    }

    fn recount(b: &TokenBatch, vs: &ValidSet) -> [usize; 3] {
        let mut c = [0; 3];
        for i in 0..b.n_episodes() {
            for t in vs.positions(i) {
                c[b.token_categories[i][t].index()] += 1;
            }
        }
        c
    }

    #[test]
    fn boundary_ratio_keeps_everything() {
        let mut cats = vec![Masked];
        cats.extend([Irrelevant; 6]);
        cats.extend([Relevant; 2]);
        let b = batch_with(&cats);
        let vs = build_valid_set(&b, 0);
        assert_eq!(vs.kept_counts, [1, 6, 2]);
        assert_eq!(vs.len(), 9);
        assert!(!vs.membership[0][0], "prompt token excluded");
    }

    #[test]
    fn majority_thinned_to_three_to_one() {
        let mut cats = vec![Masked, Masked];
        cats.extend([Irrelevant; 10]);
        cats.extend([Relevant; 2]);
        let b = batch_with(&cats);
        for seed in 0..20 {
            let vs = build_valid_set(&b, seed);
            assert_eq!(vs.kept_counts, [2, 6, 2]);
            assert_eq!(recount(&b, &vs), [2, 6, 2]);
        }
        assert_eq!(build_valid_set(&b, 3), build_valid_set(&b, 3));
        assert_ne!(build_valid_set(&b, 3).membership, build_valid_set(&b, 4).membership);
    }

    #[test]
    fn relevant_majority_thinned_too() {
        let mut cats = vec![Irrelevant];
        cats.extend([Relevant; 7]);
        let vs = build_valid_set(&batch_with(&cats), 1);
        assert_eq!(vs.kept_counts, [0, 1, 3]);
    }

    #[test]
    fn single_class_left_alone() {
        let vs = build_valid_set(&batch_with(&[Irrelevant; 9]), 1);
        assert_eq!(vs.kept_counts, [0, 9, 0]);
    }

    #[test]
    fn all_padding_is_flagged_empty() {
        let mut b = batch_with(&[Relevant, Irrelevant]);
        for row in &mut b.attention_mask {
            row.fill(false);
        }
        for row in &mut b.activation_mask {
            row.fill(false);
        }
        let vs = build_valid_set(&b, 0);
        assert!(vs.is_empty());
        assert_eq!(vs.len(), 0);
    }

    proptest::proptest! {
        #[test]
        fn never_adds_and_keeps_masked(
            raw in proptest::collection::vec(0u8..3, 1..60),
            seed in 0u64..1000,
        ) {
            let cats: Vec<RewardCategory> = raw.iter().map(|&c| RewardCategory::try_from(c).unwrap()).collect();
            let b = batch_with(&cats);
            let vs = build_valid_set(&b, seed);
            let before = [0, 1, 2].map(|c| raw.iter().filter(|&&x| x as usize == c).count());
            proptest::prop_assert_eq!(recount(&b, &vs), vs.kept_counts);
            proptest::prop_assert_eq!(vs.kept_counts[0], before[0]);
            for c in 1..3 {
                proptest::prop_assert!(vs.kept_counts[c] <= before[c]);
            }
            let (k1, k2) = (vs.kept_counts[1], vs.kept_counts[2]);
            if before[1] > 0 && before[2] > 0 {
                proptest::prop_assert!(k2 <= 3 * k1 && k1 <= 3 * k2);
            }
            for i in 0..b.n_episodes() {
                for t in vs.positions(i) {
                    proptest::prop_assert!(b.activation_mask[i][t] && b.attention_mask[i][t]);
                }
            }
        }
    }
}
