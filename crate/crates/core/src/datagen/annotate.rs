use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{HistoryEvent, RewardCategory, WordAnnotation};
use crate::{Error, Result};

/// Rules of the deterministic relevance annotator.
///
/// A word's topic is its leading alphabetic run (`"A1"` belongs to topic
/// `"A"`). The history induces a lexicon of topics; a response word is
/// relevant iff its topic is in that lexicon. Stopwords, separators and
/// marker words (prompt topic tags) carry no reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorConfig {
    /// Minimum share of relevant words among content words for a relevant sentence.
    pub tau: f64,
    pub stopwords: BTreeSet<String>,
    pub marker_prefix: char,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        let stopwords = [",", ".", "and", "the", "|", "<pad>", "<eos>", "<unk>"]
            .into_iter()
            .map(String::from)
            .collect();
        Self {
            tau: 0.5,
            stopwords,
            marker_prefix: '#',
        }
    }
}

impl AnnotatorConfig {
    pub fn is_masked_word(&self, word: &str) -> bool {
        self.stopwords.contains(word) || word.starts_with(self.marker_prefix)
    }

    /// Topic lexicon induced by the history texts.
    pub fn lexicon(&self, history: &[HistoryEvent]) -> BTreeSet<String> {
        history
            .iter()
            .flat_map(|e| e.text.split_whitespace())
            .filter(|w| !self.is_masked_word(w))
            .map(|w| topic_key(w).to_string())
            .filter(|k| !k.is_empty())
            .collect()
    }

    pub fn categorize(&self, word: &str, lexicon: &BTreeSet<String>) -> RewardCategory {
        if self.is_masked_word(word) {
            RewardCategory::Masked
        } else if lexicon.contains(topic_key(word)) {
            RewardCategory::Relevant
        } else {
            RewardCategory::Irrelevant
        }
    }

    /// Sentence label from word labels; `None` when there is no content word.
    pub fn sentence_category(&self, cats: &[RewardCategory]) -> Option<RewardCategory> {
        let relevant = cats.iter().filter(|&&c| c == RewardCategory::Relevant).count();
        let content = relevant + cats.iter().filter(|&&c| c == RewardCategory::Irrelevant).count();
        if content == 0 {
            return None;
        }
        Some(if relevant as f64 / content as f64 >= self.tau {
            RewardCategory::Relevant
        } else {
            RewardCategory::Irrelevant
        })
    }
}

/// Leading alphabetic run of a word; the whole word when it has none.
pub fn topic_key(word: &str) -> &str {
    let end = word
        .char_indices()
        .find(|(_, c)| !c.is_alphabetic())
        .map_or(word.len(), |(i, _)| i);
    if end == 0 {
        word
    } else {
        &word[..end]
    }
}

pub fn annotate_episode<S: AsRef<str>>(
    history: &[HistoryEvent],
    response_words: &[S],
    rules: &AnnotatorConfig,
) -> Result<(Vec<WordAnnotation>, RewardCategory)> {
    if history.is_empty() {
        return Err(Error::invalid("annotation needs a non-empty history"));
    }
    let lexicon = rules.lexicon(history);
    let annotations = response_words
        .iter()
        .map(|w| {
            let w = w.as_ref();
            WordAnnotation::new(w, rules.categorize(w, &lexicon))
        })
        .collect::<Result<Vec<_>>>()?;
    let cats: Vec<_> = annotations.iter().map(WordAnnotation::category).collect();
    let sentence = rules
        .sentence_category(&cats)
        .ok_or_else(|| Error::invalid("response has no content words; sentence reward undefined"))?;
    Ok((annotations, sentence))
}
