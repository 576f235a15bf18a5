use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{map_word_rewards, ChunkTokenizer, CorpusConfig, EpisodeRecord, RewardCategory};
use crate::{Error, Result};

pub const PAD_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;

const SPECIALS: [&str; 3] = ["<pad>", "<eos>", "<unk>"];

/// Token string table shared by the reward model and the policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            v.insert(s.to_string());
        }
        for t in tokens {
            v.insert(t.into());
        }
        v
    }

    /// All tokens the synthetic world can produce under `tok`.
    pub fn for_world(cfg: &CorpusConfig, tok: &ChunkTokenizer) -> Result<Self> {
        let mut tokens = Vec::new();
        for w in cfg.all_words() {
            tokens.extend(tok.tokenize(&w)?);
        }
        Ok(Self::from_tokens(tokens))
    }

    fn insert(&mut self, t: String) {
        if !self.index.contains_key(&t) {
            self.index.insert(t.clone(), self.tokens.len());
            self.tokens.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or("<unk>", String::as_str)
    }

    pub fn is_special(id: usize) -> bool {
        id < SPECIALS.len()
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }
}

/// Tokenized episodes, right-padded to a common width.
///
/// Row `i` holds `prompt ++ response`; response positions are flagged by the
/// activation mask and carry the mapped word categories.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenBatch {
    pub token_ids: Vec<Vec<usize>>,
    pub attention_mask: Vec<Vec<bool>>,
    pub activation_mask: Vec<Vec<bool>>,
    pub token_categories: Vec<Vec<RewardCategory>>,
    /// Sentence labels; rollouts without a label carry `Irrelevant`.
    pub sentence_rewards: Vec<RewardCategory>,
    pub prompt_lens: Vec<usize>,
}

impl TokenBatch {
    /// Encodes annotated episodes; an end-of-sequence token (category 0)
    /// closes every response.
    pub fn encode(records: &[EpisodeRecord], tok: &ChunkTokenizer, vocab: &Vocab) -> Result<Self> {
        let mut rows = Vec::with_capacity(records.len());
        for r in records {
            let mut ids = Vec::new();
            for w in &r.prompt_words {
                ids.extend(tok.tokenize(w)?.iter().map(|t| vocab.id(t)));
            }
            let prompt_len = ids.len();
            let mut cats = vec![RewardCategory::Masked; prompt_len];
            for (t, c) in map_word_rewards(&r.response_words, tok)? {
                ids.push(vocab.id(&t));
                cats.push(c);
            }
            ids.push(EOS_ID);
            cats.push(RewardCategory::Masked);
            rows.push((ids, cats, prompt_len, r.sentence_reward));
        }
        Ok(Self::from_rows(rows))
    }

    /// Batch for generated responses, which have no labels.
    pub fn from_sequences(prompts: &[Vec<usize>], responses: &[Vec<usize>]) -> Self {
        let rows = prompts
            .iter()
            .zip(responses)
            .map(|(p, r)| {
                let ids: Vec<usize> = p.iter().chain(r).copied().collect();
                let cats = vec![RewardCategory::Masked; ids.len()];
                (ids, cats, p.len(), RewardCategory::Irrelevant)
            })
            .collect();
        Self::from_rows(rows)
    }

    pub(crate) fn from_rows(rows: Vec<(Vec<usize>, Vec<RewardCategory>, usize, RewardCategory)>) -> Self {
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut b = TokenBatch {
            token_ids: Vec::with_capacity(rows.len()),
            attention_mask: Vec::with_capacity(rows.len()),
            activation_mask: Vec::with_capacity(rows.len()),
            token_categories: Vec::with_capacity(rows.len()),
            sentence_rewards: Vec::with_capacity(rows.len()),
            prompt_lens: Vec::with_capacity(rows.len()),
        };
        for (mut ids, mut cats, prompt_len, sentence) in rows {
            let len = ids.len();
            ids.resize(width, PAD_ID);
            cats.resize(width, RewardCategory::Masked);
            b.attention_mask.push((0..width).map(|t| t < len).collect());
            b.activation_mask
                .push((0..width).map(|t| t >= prompt_len && t < len).collect());
            b.token_ids.push(ids);
            b.token_categories.push(cats);
            b.sentence_rewards.push(sentence);
            b.prompt_lens.push(prompt_len);
        }
        b
    }

    pub fn n_episodes(&self) -> usize {
        self.token_ids.len()
    }

    pub fn width(&self) -> usize {
        self.token_ids.first().map_or(0, Vec::len)
    }

    /// Number of attended tokens in row `i`.
    pub fn seq_len(&self, i: usize) -> usize {
        self.attention_mask[i].iter().filter(|&&m| m).count()
    }

    /// Attended token ids of row `i`.
    pub fn sequence(&self, i: usize) -> &[usize] {
        &self.token_ids[i][..self.seq_len(i)]
    }

    pub fn check_vocab(&self, vocab_size: usize) -> Result<()> {
        for row in &self.token_ids {
            if let Some(&id) = row.iter().find(|&&id| id >= vocab_size) {
                return Err(Error::OutOfVocab { id, vocab: vocab_size });
            }
        }
        Ok(())
    }

    /// Checks the mask invariants.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n_episodes() {
            for t in 0..self.width() {
                if self.activation_mask[i][t] && !self.attention_mask[i][t] {
                    return Err(Error::invalid(format!("row {i} pos {t}: active padding")));
                }
                if !self.activation_mask[i][t] && self.token_categories[i][t] != RewardCategory::Masked {
                    return Err(Error::invalid(format!(
                        "row {i} pos {t}: category outside the response"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sub-batch of the given rows.
    pub fn select(&self, rows: &[usize]) -> Self {
        let pick = |i: usize| {
            let len = self.seq_len(i);
            (
                self.token_ids[i][..len].to_vec(),
                self.token_categories[i][..len].to_vec(),
                self.prompt_lens[i],
                self.sentence_rewards[i],
            )
        };
        Self::from_rows(rows.iter().map(|&i| pick(i)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_corpus;

    #[test]
    fn world_vocab_has_64_tokens_under_chunk3() {
        let v = Vocab::for_world(&CorpusConfig::default(), &ChunkTokenizer::new(3).unwrap()).unwrap();
        assert_eq!(v.len(), 64);
        assert_eq!(v.id("<pad>"), PAD_ID);
        assert_eq!(v.id("<eos>"), EOS_ID);
        assert_eq!(v.token(v.id("B3")), "B3");
        assert_eq!(v.id("zzz"), UNK_ID);
    }

    #[test]
    fn encoded_masks_hold_invariants() {
        let cfg = CorpusConfig::default();
        let tok = ChunkTokenizer::new(3).unwrap();
        let vocab = Vocab::for_world(&cfg, &tok).unwrap();
        let recs = generate_corpus(2, 20, &cfg).unwrap();
        let b = TokenBatch::encode(&recs, &tok, &vocab).unwrap();
        b.validate().unwrap();
        b.check_vocab(vocab.len()).unwrap();
        for i in 0..b.n_episodes() {
            let active = b.activation_mask[i].iter().filter(|&&m| m).count();
            // 3 queries, 2 separators, end-of-sequence
            assert_eq!(active, 6);
            assert_eq!(b.seq_len(i), b.prompt_lens[i] + 6);
            assert_eq!(b.sequence(i).last(), Some(&EOS_ID));
        }
        let sub = b.select(&[3, 1]);
        assert_eq!(sub.sequence(0), b.sequence(3));
        assert_eq!(sub.sentence_rewards[1], b.sentence_rewards[1]);
    }

    #[test]
    fn out_of_vocab_detected() {
        let b = TokenBatch::from_sequences(&[vec![3]], &[vec![99]]);
        assert!(matches!(b.check_vocab(64), Err(Error::OutOfVocab { id: 99, .. })));
    }
}
