//! Class description documents and their distillation into sentence
//! prototypes.

mod contractions;
mod documents;
mod prototypes;
mod segment;

use serde::{Deserialize, Serialize};

pub use contractions::expand_contractions;
pub use documents::{load_documents, RawDocument};
pub use prototypes::{
    build_label_prototype, build_paragraph_prototype, filter_min_words, normalize_label, prototype_store_bytes,
    read_prototype_store, select_prototypes, surviving_sentences, write_prototype_store, Prototype, PrototypeMode,
    PrototypeRecord, PrototypeSet, StoreConfig, StoredPrototype, DEFAULT_MAX_SENTENCES, DEFAULT_MIN_WORDS,
};
pub use segment::split_sentences;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Document,
    Observer,
    Fused,
}

/// A piece of natural-language text with its whitespace word count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    text: String,
    word_count: usize,
    origin: Origin,
}

impl Sentence {
    /// Collapses runs of whitespace and trims the ends.
    pub fn new(text: &str, origin: Origin) -> Self {
        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        let word_count = word_count(&text);
        Self {
            text,
            word_count,
            origin,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }
}

impl std::fmt::Display for Sentence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

/// Number of whitespace-delimited tokens; punctuation counts with its word.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
