use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Splits text into lowercase word tokens.
///
/// Runs of alphanumeric characters form words; every other non-whitespace
/// character becomes a standalone token. The output of `tokenize` joined by
/// single spaces tokenizes back to itself.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Ordered set of word strings with dense integer ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::Validation(format!(
                "vocabulary needs at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        if tokens.len() > u32::MAX as usize {
            return Err(Error::Validation("vocabulary too large".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::Validation(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Builds a vocabulary from tokens in first-appearance order.
    pub fn from_stream<I, T>(stream: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut seen = HashMap::new();
        let mut tokens = Vec::new();
        for tok in stream {
            let tok = tok.as_ref();
            if !seen.contains_key(tok) {
                seen.insert(tok.to_owned(), ());
                tokens.push(tok.to_owned());
            }
        }
        Vocabulary::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<T: AsRef<str>>(&self, words: &[T]) -> Result<Vec<u32>> {
        words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                self.id(w)
                    .ok_or_else(|| Error::Validation(format!("unknown token {w:?}")))
            })
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::new(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// A word sequence with session boundaries.
///
/// A boundary marks the position where a new post (or typing session)
/// starts; the language model context resets there.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    id: String,
    words: Vec<u32>,
    boundaries: Vec<usize>,
}

impl Sequence {
    pub fn new(id: impl Into<String>, words: Vec<u32>, mut boundaries: Vec<usize>) -> Result<Self> {
        let id = id.into();
        if words.is_empty() {
            return Err(Error::Validation(format!("sequence {id:?} is empty")));
        }
        if boundaries.first() != Some(&0) {
            boundaries.insert(0, 0);
        }
        for pair in boundaries.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Validation(format!(
                    "sequence {id:?}: boundaries must be strictly increasing"
                )));
            }
        }
        if let Some(&last) = boundaries.last() {
            if last >= words.len() {
                return Err(Error::Validation(format!(
                    "sequence {id:?}: boundary {last} out of range for {} words",
                    words.len()
                )));
            }
        }
        Ok(Sequence {
            id,
            words,
            boundaries,
        })
    }

    /// Single-session sequence.
    pub fn single(id: impl Into<String>, words: Vec<u32>) -> Result<Self> {
        Sequence::new(id, words, vec![0])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Start of the session that is active when predicting position `pos`.
    pub fn session_start(&self, pos: usize) -> usize {
        let idx = self.boundaries.partition_point(|&b| b <= pos);
        // boundaries[0] == 0, so idx >= 1
        self.boundaries[idx - 1]
    }

    /// Keeps the first `len` words and the boundaries that fall inside them.
    pub fn truncated(&self, len: usize) -> Result<Sequence> {
        let len = len.min(self.words.len());
        let boundaries = self
            .boundaries
            .iter()
            .copied()
            .filter(|&b| b < len)
            .collect();
        Sequence::new(self.id.clone(), self.words[..len].to_vec(), boundaries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(
            tokenize("Hello, World!  It's  OK"),
            vec!["hello", ",", "world", "!", "it", "'", "s", "ok"]
        );
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn tokenize_is_idempotent_on_joined_output() {
        let once = tokenize("A quick (brown) fox... jumps—over");
        let again = tokenize(&once.join(" "));
        assert_eq!(once, again);
    }

    #[test]
    fn vocabulary_index_inverts_tokens() {
        let v = Vocabulary::from_stream(["b", "a", "b", "c"]).unwrap();
        assert_eq!(v.len(), 3);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i as u32));
            assert_eq!(v.token(i as u32), Some(t.as_str()));
        }
    }

    #[test]
    fn vocabulary_rejects_tiny_and_duplicates() {
        assert!(Vocabulary::new(vec!["x".into()]).is_err());
        assert!(Vocabulary::new(vec!["x".into(), "x".into()]).is_err());
    }

    #[test]
    fn sequence_validates_boundaries() {
        assert!(Sequence::new("s", vec![], vec![0]).is_err());
        assert!(Sequence::new("s", vec![1, 2], vec![0, 2]).is_err());
        assert!(Sequence::new("s", vec![1, 2, 3], vec![0, 2, 1]).is_err());
        let s = Sequence::new("s", vec![1, 2, 3], vec![2]).unwrap();
        assert_eq!(s.boundaries(), &[0, 2]);
        assert_eq!(s.session_start(1), 0);
        assert_eq!(s.session_start(2), 2);
        assert_eq!(s.session_start(3), 2);
    }

    #[test]
    fn truncation_drops_outside_boundaries() {
        let s = Sequence::new("s", vec![1, 2, 3, 4], vec![0, 2, 3]).unwrap();
        let t = s.truncated(3).unwrap();
        assert_eq!(t.words(), &[1, 2, 3]);
        assert_eq!(t.boundaries(), &[0, 2]);
    }
}
