//! Synthetic query-generation data: session corpus, word annotations, toy
//! tokenizers and the mapping from word-level to token-level rewards.

mod annotate;
mod batch;
mod corpus;
mod jsonl;
mod parity;
mod tokenizer;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Error;

pub use annotate::{annotate_episode, topic_key, AnnotatorConfig};
pub use batch::{TokenBatch, Vocab, EOS_ID, PAD_ID, UNK_ID};
pub use corpus::{generate_corpus, CorpusConfig};
pub use jsonl::{load_dataset, store_dataset};
pub use parity::{parity_batch, parity_category};
pub use tokenizer::{map_word_rewards, tokenize_word, ChunkTokenizer};

/// Per-token or per-sentence reward label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum RewardCategory {
    /// Non-reward token: separators, stopwords, padding.
    Masked = 0,
    Irrelevant = 1,
    Relevant = 2,
}

impl RewardCategory {
    pub const ALL: [RewardCategory; 3] = [
        RewardCategory::Masked,
        RewardCategory::Irrelevant,
        RewardCategory::Relevant,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn value(self) -> f64 {
        self as u8 as f64
    }
}

impl TryFrom<u8> for RewardCategory {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::from_index(v as usize).ok_or_else(|| format!("reward category {v} not in {{0,1,2}}"))
    }
}

impl From<RewardCategory> for u8 {
    fn from(c: RewardCategory) -> u8 {
        c as u8
    }
}

impl fmt::Display for RewardCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

/// A response word and its relevance label. Serialized as `[word, cat]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "(String, RewardCategory)", into = "(String, RewardCategory)")]
pub struct WordAnnotation {
    word: String,
    category: RewardCategory,
}

impl WordAnnotation {
    pub fn new(word: impl Into<String>, category: RewardCategory) -> crate::Result<Self> {
        let word = word.into();
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!(
                "annotated word {word:?} must be non-empty without whitespace"
            )));
        }
        Ok(Self { word, category })
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn category(&self) -> RewardCategory {
        self.category
    }
}

impl TryFrom<(String, RewardCategory)> for WordAnnotation {
    type Error = String;

    fn try_from((word, category): (String, RewardCategory)) -> Result<Self, Self::Error> {
        WordAnnotation::new(word, category).map_err(|e| e.to_string())
    }
}

impl From<WordAnnotation> for (String, RewardCategory) {
    fn from(w: WordAnnotation) -> Self {
        (w.word, w.category)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Search,
    Click,
    Purchase,
    Visit,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [
        EventKind::Search,
        EventKind::Click,
        EventKind::Purchase,
        EventKind::Visit,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub kind: EventKind,
    pub text: String,
}

impl HistoryEvent {
    pub fn new(kind: EventKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: text.into(),
        }
    }
}

/// One user's session history together with the prompt built from it and an
/// annotated target response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub history: Vec<HistoryEvent>,
    pub prompt_words: Vec<String>,
    pub response_words: Vec<WordAnnotation>,
    pub sentence_reward: RewardCategory,
    #[serde(default)]
    pub target_queries: Vec<String>,
}

impl EpisodeRecord {
    pub fn validate(&self) -> crate::Result<()> {
        if self.sentence_reward == RewardCategory::Masked {
            return Err(Error::invalid(format!(
                "episode {}: sentence reward must be 1 or 2",
                self.id
            )));
        }
        Ok(())
    }
}
