use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::vocab::tokenize;

pub const DEFAULT_BOW_DIM: usize = 1024;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "of", "in", "on", "at", "to", "and", "or", "with",
    "by", "for", "from", "as", "it", "its", "this", "that", "these", "those", "he", "she", "they", "his", "her",
    "their", "there", "then", "while", "into", "who", "which",
];

/// Word-overlap stub: each content word increments one hashed bucket, so
/// the dot product of two vectors counts shared words.
///
/// Function words and punctuation are ignored. Text with no content words
/// embeds to an error rather than a zero vector.
#[derive(Debug, Clone)]
pub struct BagOfWordsProvider {
    id: String,
    dim: usize,
}

impl BagOfWordsProvider {
    pub fn new(dim: usize) -> Self {
        Self {
            id: if dim == DEFAULT_BOW_DIM {
                "bow".to_string()
            } else {
                format!("bow{dim}")
            },
            dim,
        }
    }

    pub fn content_words(text: &str) -> Vec<String> {
        tokenize(text)
            .into_iter()
            .filter(|t| t.chars().any(char::is_alphanumeric))
            .filter(|t| !STOPWORDS.contains(&t.as_str()))
            .collect()
    }
}

impl Default for BagOfWordsProvider {
    fn default() -> Self {
        Self::new(DEFAULT_BOW_DIM)
    }
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl EmbeddingProvider for BagOfWordsProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let words = Self::content_words(text);
        if words.is_empty() {
            return Err(Error::ZeroNorm(format!("no content words in {text:?}")));
        }
        let mut values = vec![0.0; self.dim];
        for w in words {
            values[(fnv1a(w.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        EmbeddingVector::new(values, self.id.clone())
    }
}
