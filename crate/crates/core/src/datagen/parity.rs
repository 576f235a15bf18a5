use rand::Rng;

use super::{RewardCategory, TokenBatch, EOS_ID};
use crate::seed::{self, stream};
use crate::{Error, Result};

/// First id used for ordinary tokens; lower ids are the special tokens.
const FIRST_ID: usize = 3;

/// Label of a token in the parity world: even ids are relevant, odd ids
/// irrelevant, special tokens masked.
pub fn parity_category(id: usize) -> RewardCategory {
    if id < FIRST_ID {
        RewardCategory::Masked
    } else if id % 2 == 0 {
        RewardCategory::Relevant
    } else {
        RewardCategory::Irrelevant
    }
}

/// Linearly separable control task: a token's category depends only on its
/// own id. Prompts have 1 to 3 tokens and responses 2 to 8 tokens plus an
/// end-of-sequence token; the sentence label follows the `tau` rule.
pub fn parity_batch(seed: u64, n: usize, vocab: usize, tau: f64) -> Result<TokenBatch> {
    if vocab < FIRST_ID + 2 {
        return Err(Error::invalid("parity vocabulary needs at least two ordinary ids"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid("tau must lie in [0, 1]"));
    }
    let rows = (0..n)
        .map(|i| {
            let mut rng = seed::sub_rng(seed, stream::PARITY, i as u64);
            let prompt_len = rng.gen_range(1..=3);
            let resp_len = rng.gen_range(2..=8);
            let mut ids: Vec<usize> = (0..prompt_len + resp_len).map(|_| rng.gen_range(FIRST_ID..vocab)).collect();
            ids.push(EOS_ID);
            let mut cats = vec![RewardCategory::Masked; prompt_len];
            cats.extend(ids[prompt_len..].iter().map(|&t| parity_category(t)));
            let relevant = cats.iter().filter(|&&c| c == RewardCategory::Relevant).count();
            let sentence = if relevant as f64 / resp_len as f64 >= tau {
                RewardCategory::Relevant
            } else {
                RewardCategory::Irrelevant
            };
            (ids, cats, prompt_len, sentence)
        })
        .collect();
    Ok(TokenBatch::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_parity() {
        let b = parity_batch(4, 50, 64, 0.5).unwrap();
        assert!(b.validate().is_ok());
        for i in 0..b.n_episodes() {
            for t in 0..b.seq_len(i) {
                let expect = if b.activation_mask[i][t] {
                    parity_category(b.token_ids[i][t])
                } else {
                    RewardCategory::Masked
                };
                assert_eq!(b.token_categories[i][t], expect);
            }
        }
        assert_eq!(b, parity_batch(4, 50, 64, 0.5).unwrap());
        assert!(parity_batch(0, 1, 4, 0.5).is_err());
    }
}
