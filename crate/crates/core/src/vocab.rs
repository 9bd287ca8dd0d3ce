//! Word-level tokenization shared by the captioner and the toy embedder.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':'];

/// Lowercases and splits on whitespace; sentence punctuation becomes its
/// own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        let word = lower.trim_end_matches(PUNCTUATION);
        let trailing = &lower[word.len()..];
        if !word.is_empty() {
            out.push(word.to_string());
        }
        out.extend(trailing.chars().map(String::from));
    }
    out
}

/// Inverse of [`tokenize`] up to case: punctuation attaches to the
/// preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let is_punct = t.chars().count() == 1 && t.starts_with(PUNCTUATION);
        if !out.is_empty() && !is_punct {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Ordered token list; ids 0..4 are PAD, BOS, EOS and UNK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Reserved tokens followed by every distinct token of `texts`, sorted.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().filter(|w| !RESERVED.contains(&w.as_str())))
            .collect();
        Self::from_tokens(tokens).expect("reserved tokens present")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..4] != RESERVED {
            return Err(Error::Data(
                "vocabulary must start with <pad>, <bos>, <eos>, <unk>".into(),
            ));
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect::<HashMap<_, _>>();
        if index.len() != tokens.len() {
            return Err(Error::Data("vocabulary has duplicate tokens".into()));
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token ids for `text`; unknown words map to [`UNK`].
    pub fn encode_lossy(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(t).unwrap_or(UNK)).collect()
    }

    /// Token ids for `text`; any unknown word is an error.
    pub fn encode_strict(&self, text: &str) -> Result<Vec<usize>> {
        tokenize(text)
            .iter()
            .map(|t| {
                self.id(t)
                    .ok_or_else(|| Error::Data(format!("token {t:?} is not in the vocabulary")))
            })
            .collect()
    }

    /// Text for ids, skipping reserved tokens.
    pub fn decode(&self, ids: &[usize]) -> String {
        let words: Vec<&str> = ids
            .iter()
            .filter(|&&id| id > UNK)
            .filter_map(|&id| self.token(id))
            .collect();
        detokenize(&words)
    }
}
