use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{annotate_episode, AnnotatorConfig, EpisodeRecord, EventKind, HistoryEvent};
use crate::seed::{self, stream};
use crate::{Error, Result};

/// Shape of the synthetic search-session world.
///
/// Topics are capital letters; a topic owns the words `"<T>0" .. "<T>{n-1}"`.
/// Each user follows one or more topics, their history mentions only those
/// topics, and the prompt lists the topics as `#T` tags followed by `|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_topics: usize,
    pub words_per_topic: usize,
    pub max_user_topics: usize,
    pub min_history: usize,
    pub max_history: usize,
    pub target_query_num: usize,
    /// When set, each record draws its query count uniformly from
    /// `min_target_queries..=target_query_num` instead.
    #[serde(default)]
    pub min_target_queries: Option<usize>,
    /// Probability that a target query is on one of the user's topics.
    pub relevant_prob: f64,
    /// Probability that two consecutive queries are joined by a separator
    /// word rather than directly adjacent.
    #[serde(default = "always")]
    pub separator_prob: f64,
    pub annotator: AnnotatorConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_topics: 8,
            words_per_topic: 6,
            max_user_topics: 2,
            min_history: 1,
            max_history: 8,
            target_query_num: 3,
            min_target_queries: None,
            relevant_prob: 0.5,
            separator_prob: 1.0,
            annotator: AnnotatorConfig::default(),
        }
    }
}

fn always() -> f64 {
    1.0
}

pub const PROMPT_END: &str = "|";
pub const SEPARATORS: [&str; 2] = [",", "and"];

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=26).contains(&self.n_topics) {
            return Err(Error::invalid("n_topics must be in 1..=26"));
        }
        if !(1..=10).contains(&self.words_per_topic) {
            return Err(Error::invalid("words_per_topic must be in 1..=10"));
        }
        if self.max_user_topics == 0 || self.max_user_topics >= self.n_topics {
            return Err(Error::invalid(
                "max_user_topics must be positive and leave at least one off-topic",
            ));
        }
        if self.min_history == 0 || self.min_history > self.max_history || self.max_history > 8 {
            return Err(Error::invalid("history length must satisfy 1 <= min <= max <= 8"));
        }
        if self.target_query_num == 0 {
            return Err(Error::invalid("target_query_num must be positive"));
        }
        if matches!(self.min_target_queries, Some(m) if m == 0 || m > self.target_query_num) {
            return Err(Error::invalid("min_target_queries must lie in 1..=target_query_num"));
        }
        if !(0.0..=1.0).contains(&self.relevant_prob) || !(0.0..=1.0).contains(&self.separator_prob) {
            return Err(Error::invalid("relevant_prob and separator_prob must be probabilities"));
        }
        Ok(())
    }

    pub fn topic(&self, i: usize) -> char {
        (b'A' + i as u8) as char
    }

    pub fn topic_word(&self, topic: usize, j: usize) -> String {
        format!("{}{}", self.topic(topic), j)
    }

    pub fn marker(&self, topic: usize) -> String {
        format!("{}{}", self.annotator.marker_prefix, self.topic(topic))
    }

    /// Every word the world can produce, in a fixed order.
    pub fn all_words(&self) -> Vec<String> {
        let mut words: Vec<String> = vec![PROMPT_END.into(), ",".into(), ".".into(), "and".into(), "the".into()];
        words.extend((0..self.n_topics).map(|t| self.marker(t)));
        for t in 0..self.n_topics {
            words.extend((0..self.words_per_topic).map(|j| self.topic_word(t, j)));
        }
        words
    }
}

/// Deterministic synthetic corpus. Episode `i` draws from its own stream, so
/// the result does not depend on how the work is scheduled.
pub fn generate_corpus(seed: u64, n: usize, cfg: &CorpusConfig) -> Result<Vec<EpisodeRecord>> {
    if n == 0 {
        return Err(Error::invalid("corpus size must be at least 1"));
    }
    cfg.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| generate_episode(seed, i, cfg))
        .collect()
}

fn generate_episode(seed: u64, i: usize, cfg: &CorpusConfig) -> Result<EpisodeRecord> {
    let mut rng = seed::sub_rng(seed, stream::CORPUS, i as u64);
    let n_user = rng.gen_range(1..=cfg.max_user_topics);
    let mut all_topics: Vec<usize> = (0..cfg.n_topics).collect();
    all_topics.shuffle(&mut rng);
    let (user, other) = all_topics.split_at(n_user);

    let n_events = rng.gen_range(cfg.min_history..=cfg.max_history);
    let mut texts: Vec<Vec<String>> = (0..n_events)
        .map(|_| {
            let len = rng.gen_range(1..=3);
            (0..len)
                .map(|_| {
                    let t = *user.choose(&mut rng).expect("user topics");
                    cfg.topic_word(t, rng.gen_range(0..cfg.words_per_topic))
                })
                .collect()
        })
        .collect();
    // Every user topic must show up somewhere in the history.
    for &t in user {
        let key = cfg.topic(t).to_string();
        let present = texts.iter().flatten().any(|w| w.starts_with(&key));
        if !present {
            let e = rng.gen_range(0..texts.len());
            texts[e].push(cfg.topic_word(t, rng.gen_range(0..cfg.words_per_topic)));
        }
    }
    let history: Vec<HistoryEvent> = texts
        .into_iter()
        .map(|words| {
            let kind = *EventKind::ALL.choose(&mut rng).expect("kinds");
            HistoryEvent::new(kind, words.join(" "))
        })
        .collect();

    // Topic tags in order of first appearance.
    let mut prompt_words = Vec::new();
    for w in history.iter().flat_map(|e| e.text.split_whitespace()) {
        let tag = format!("{}{}", cfg.annotator.marker_prefix, super::topic_key(w));
        if !prompt_words.contains(&tag) {
            prompt_words.push(tag);
        }
    }
    prompt_words.push(PROMPT_END.to_string());

    let n_queries = match cfg.min_target_queries {
        Some(lo) => rng.gen_range(lo..=cfg.target_query_num),
        None => cfg.target_query_num,
    };
    let target_queries: Vec<String> = (0..n_queries)
        .map(|_| {
            let pool = if rng.gen_bool(cfg.relevant_prob) { user } else { other };
            let t = *pool.choose(&mut rng).expect("topic pool");
            cfg.topic_word(t, rng.gen_range(0..cfg.words_per_topic))
        })
        .collect();
    let mut response = Vec::with_capacity(2 * target_queries.len());
    for (k, q) in target_queries.iter().enumerate() {
        if k > 0 && rng.gen_bool(cfg.separator_prob) {
            response.push(SEPARATORS.choose(&mut rng).expect("separators").to_string());
        }
        response.push(q.clone());
    }
    let (response_words, sentence_reward) = annotate_episode(&history, &response, &cfg.annotator)?;

    Ok(EpisodeRecord {
        id: format!("ep-{seed}-{i:06}"),
        history,
        prompt_words,
        response_words,
        sentence_reward,
        target_queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::RewardCategory;

    #[test]
    fn deterministic_and_sized() {
        let cfg = CorpusConfig::default();
        let a = generate_corpus(0, 2, &cfg).unwrap();
        let b = generate_corpus(0, 2, &cfg).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_ne!(a, generate_corpus(1, 2, &cfg).unwrap());
    }

    #[test]
    fn record_shape() {
        let cfg = CorpusConfig::default();
        for r in generate_corpus(7, 200, &cfg).unwrap() {
            assert!((1..=8).contains(&r.history.len()));
            assert_eq!(r.target_queries.len(), 3);
            assert!(r.prompt_words.len() <= cfg.max_user_topics + 1);
            assert_eq!(r.prompt_words.last().map(String::as_str), Some("|"));
            assert_ne!(r.sentence_reward, RewardCategory::Masked);
            r.validate().unwrap();
        }
    }

    #[test]
    fn target_query_count_is_configurable() {
        let cfg = CorpusConfig {
            target_query_num: 5,
            ..Default::default()
        };
        let c = generate_corpus(3, 10, &cfg).unwrap();
        assert!(c.iter().all(|r| r.target_queries.len() == 5));

        let ranged = CorpusConfig {
            target_query_num: 4,
            min_target_queries: Some(2),
            ..Default::default()
        };
        let counts: std::collections::BTreeSet<usize> = generate_corpus(3, 200, &ranged)
            .unwrap()
            .iter()
            .map(|r| r.target_queries.len())
            .collect();
        assert_eq!(counts, [2, 3, 4].into());

        let bare = CorpusConfig {
            separator_prob: 0.0,
            ..Default::default()
        };
        for r in generate_corpus(5, 20, &bare).unwrap() {
            assert_eq!(r.response_words.len(), 3);
        }
        let bad = CorpusConfig {
            min_target_queries: Some(4),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_episodes_rejected() {
        assert!(generate_corpus(0, 0, &CorpusConfig::default()).is_err());
    }

    #[test]
    fn labels_mix_both_classes() {
        let c = generate_corpus(11, 300, &CorpusConfig::default()).unwrap();
        let rel = c
            .iter()
            .filter(|r| r.sentence_reward == RewardCategory::Relevant)
            .count();
        assert!(rel > 60 && rel < 240, "relevant sentences: {rel}");
    }
}
