use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::datagen::{AnnotatorConfig, RewardCategory, Vocab, EOS_ID, PAD_ID};

/// How a response is turned into a 0/1 relevance score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeTemplate {
    /// Relevant share of the content words must reach `tau`.
    TokenAggregate,
    /// Every content word must be relevant.
    Sentence,
}

/// Synthetic stand-in for a judging LLM: scores generated responses against
/// the topic lexicon of the user's history.
#[derive(Clone, Debug)]
pub struct Judge {
    pub template: JudgeTemplate,
    pub rules: AnnotatorConfig,
    pub vocab: Vocab,
}

impl Judge {
    pub fn new(template: JudgeTemplate, rules: AnnotatorConfig, vocab: Vocab) -> Self {
        Self { template, rules, vocab }
    }

    /// Word categories of a generated response. Tokens are decoded one word
    /// each, which is exact for word-level vocabularies.
    pub fn categories(&self, response: &[usize], lexicon: &BTreeSet<String>) -> Vec<RewardCategory> {
        response
            .iter()
            .filter(|&&t| t != EOS_ID && t != PAD_ID)
            .map(|&t| self.rules.categorize(self.vocab.token(t), lexicon))
            .collect()
    }

    pub fn score_words(&self, cats: &[RewardCategory]) -> u8 {
        let relevant = cats.iter().filter(|&&c| c == RewardCategory::Relevant).count();
        let irrelevant = cats.iter().filter(|&&c| c == RewardCategory::Irrelevant).count();
        let pass = match self.template {
            JudgeTemplate::TokenAggregate => {
                self.rules.sentence_category(cats) == Some(RewardCategory::Relevant)
            }
            JudgeTemplate::Sentence => relevant > 0 && irrelevant == 0,
        };
        pass as u8
    }

    pub fn score(&self, response: &[usize], lexicon: &BTreeSet<String>) -> u8 {
        self.score_words(&self.categories(response, lexicon))
    }
}
