use serde::{Deserialize, Serialize};

use super::{RewardCategory, WordAnnotation};
use crate::{Error, Result};

/// Toy tokenizer that splits a word into fixed-length character chunks.
///
/// Two chunkers with different `chunk_len` disagree on almost every word
/// longer than one character, which is all the word-to-token mapping needs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkTokenizer {
    pub name: String,
    pub chunk_len: usize,
}

impl ChunkTokenizer {
    pub fn new(chunk_len: usize) -> Result<Self> {
        if chunk_len == 0 {
            return Err(Error::invalid("chunk_len must be positive"));
        }
        Ok(Self {
            name: format!("chunk{chunk_len}"),
            chunk_len,
        })
    }

    pub fn tokenize(&self, word: &str) -> Result<Vec<String>> {
        tokenize_word(word, self)
    }

    pub fn detokenize<S: AsRef<str>>(&self, tokens: &[S]) -> String {
        tokens.iter().map(AsRef::as_ref).collect()
    }
}

pub fn tokenize_word(word: &str, tok: &ChunkTokenizer) -> Result<Vec<String>> {
    if word.is_empty() {
        return Err(Error::invalid("cannot tokenize an empty word"));
    }
    if tok.chunk_len == 0 {
        return Err(Error::invalid("chunk_len must be positive"));
    }
    let chars: Vec<char> = word.chars().collect();
    Ok(chars
        .chunks(tok.chunk_len)
        .map(|c| c.iter().collect())
        .collect())
}

/// Every token emitted for a word inherits that word's category.
pub fn map_word_rewards(
    words: &[WordAnnotation],
    tok: &ChunkTokenizer,
) -> Result<Vec<(String, RewardCategory)>> {
    let mut out = Vec::with_capacity(words.len());
    for w in words {
        for t in tokenize_word(w.word(), tok)? {
            out.push((t, w.category()));
        }
    }
    Ok(out)
}
