//! Observation types and the token vocabulary.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token strings and dense ids; the four reserved tokens occupy ids 0..4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<&str>())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from non-reserved tokens in first-seen order.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for t in RESERVED_TOKENS {
            v.insert(t);
        }
        for t in tokens {
            v.insert(t.as_ref());
        }
        v
    }

    fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    /// Parses the one-token-per-line format; line number is the id.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED_TOKENS.len() || lines[..RESERVED_TOKENS.len()] != RESERVED_TOKENS {
            return Err(Error::Data(format!(
                "vocabulary must start with reserved tokens {RESERVED_TOKENS:?}"
            )));
        }
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for (i, line) in lines.iter().enumerate() {
            let t = line.trim_end_matches('\r');
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::Data(format!("vocabulary line {}: invalid token {t:?}", i + 1)));
            }
            if v.index.contains_key(t) {
                return Err(Error::Data(format!("vocabulary line {}: duplicate token {t:?}", i + 1)));
            }
            v.insert(t);
        }
        Ok(v)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
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

    /// Unknown words map to `<unk>`.
    pub fn encode(&self, words: &[&str]) -> Vec<u32> {
        words.iter().map(|w| self.id(w).unwrap_or(UNK)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SequenceExample {
    /// Content tokens without BOS/EOS.
    pub tokens: Vec<u32>,
    pub label: Option<usize>,
}

impl SequenceExample {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self { tokens, label: None }
    }

    pub fn labeled(tokens: Vec<u32>, label: usize) -> Self {
        Self { tokens, label: Some(label) }
    }

    /// Checks ids against the vocabulary size and length limit, and rejects
    /// reserved control tokens inside the content.
    pub fn validate(&self, vocab_size: usize, max_len: usize) -> Result<()> {
        if self.tokens.len() > max_len {
            return Err(Error::Data(format!(
                "sequence of length {} exceeds maximum {max_len}",
                self.tokens.len()
            )));
        }
        for &t in &self.tokens {
            if t as usize >= vocab_size {
                return Err(Error::Data(format!("token id {t} outside vocabulary of size {vocab_size}")));
            }
            if t == EOS || t == BOS || t == PAD {
                return Err(Error::Data(format!("reserved token id {t} inside sequence content")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DocumentExample {
    /// Dense bag-of-words counts indexed by token id.
    pub counts: Vec<u32>,
    pub label: Option<usize>,
}

impl DocumentExample {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts, label: None }
    }

    pub fn from_tokens(tokens: &[u32], vocab_size: usize, label: Option<usize>) -> Self {
        let mut counts = vec![0u32; vocab_size];
        for &t in tokens {
            counts[t as usize] += 1;
        }
        Self { counts, label }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.counts.len() != vocab_size {
            return Err(Error::Data(format!(
                "document has {} count entries, vocabulary has {vocab_size}",
                self.counts.len()
            )));
        }
        if self.total() == 0 {
            return Err(Error::Data("document has zero total count".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointExample<T> {
    pub coords: Vec<T>,
    pub label: Option<usize>,
}

/// One observation in any supported modality.
#[derive(Clone, Debug, PartialEq)]
pub enum Example<T> {
    Point(PointExample<T>),
    Sequence(SequenceExample),
    Document(DocumentExample),
}

impl<T: Scalar> Example<T> {
    pub fn point(coords: Vec<T>, label: Option<usize>) -> Self {
        Example::Point(PointExample { coords, label })
    }

    pub fn label(&self) -> Option<usize> {
        match self {
            Example::Point(p) => p.label,
            Example::Sequence(s) => s.label,
            Example::Document(d) => d.label,
        }
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        match &mut self {
            Example::Point(p) => p.label = label,
            Example::Sequence(s) => s.label = label,
            Example::Document(d) => d.label = label,
        }
        self
    }

    pub fn modality(&self) -> Modality {
        match self {
            Example::Point(_) => Modality::Points,
            Example::Sequence(_) => Modality::Sequence,
            Example::Document(_) => Modality::Document,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Points,
    Sequence,
    Document,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Points => "points",
            Modality::Sequence => "sequence",
            Modality::Document => "document",
        })
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "points" => Ok(Modality::Points),
            "sequence" => Ok(Modality::Sequence),
            "document" => Ok(Modality::Document),
            other => Err(format!("unknown modality '{other}' (expected points, sequence, document)")),
        }
    }
}
