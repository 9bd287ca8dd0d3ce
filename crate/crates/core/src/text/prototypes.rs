use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Origin, Sentence};
use crate::embedder::{cosine_similarity, embed, EmbeddingProvider};
use crate::error::{Error, Result, ResultExt};

pub const DEFAULT_MIN_WORDS: usize = 10;
pub const DEFAULT_MAX_SENTENCES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeMode {
    Sentences,
    Paragraph,
    LabelOnly,
}

impl std::str::FromStr for PrototypeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentences" => Ok(Self::Sentences),
            "paragraph" => Ok(Self::Paragraph),
            "label" | "label_only" => Ok(Self::LabelOnly),
            other => Err(Error::Config(format!("unknown prototype mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for PrototypeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sentences => "sentences",
            Self::Paragraph => "paragraph",
            Self::LabelOnly => "label_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub sentence: Sentence,
    /// Cosine similarity to the label; only set for selected sentences.
    pub score: Option<f64>,
}

/// The sentences standing in for one class in the joint space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub class_label: String,
    pub mode: PrototypeMode,
    pub prototypes: Vec<Prototype>,
}

impl PrototypeSet {
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.prototypes.iter().map(|p| p.sentence.text())
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }
}

/// Sentences with at least `min_words` words, order preserved.
pub fn filter_min_words(sentences: &[Sentence], min_words: usize) -> Vec<Sentence> {
    sentences
        .iter()
        .filter(|s| s.word_count() >= min_words)
        .cloned()
        .collect()
}

/// Number of sentences that pass the length filter.
pub fn surviving_sentences(sentences: &[Sentence], min_words: usize) -> usize {
    sentences.iter().filter(|s| s.word_count() >= min_words).count()
}

/// Keeps the `max_sentences` filtered sentences most similar to the label.
///
/// Equal scores keep document order.
pub fn select_prototypes(
    label: &str,
    sentences: &[Sentence],
    provider: &dyn EmbeddingProvider,
    min_words: usize,
    max_sentences: usize,
) -> Result<PrototypeSet> {
    if min_words == 0 || max_sentences == 0 {
        return Err(Error::Config("min_words and max_sentences must be positive".into()));
    }
    let candidates = filter_min_words(sentences, min_words);
    if candidates.is_empty() {
        return Err(Error::Config(format!(
            "class {label:?}: no sentence has at least {min_words} words \
             (max_sentences={max_sentences}, {} candidates before filtering)",
            sentences.len()
        )));
    }
    let label_sentence = Sentence::new(&normalize_label(label), Origin::Document);
    let label_vec = embed(&label_sentence, provider).with_context(|| format!("embedding label of class {label:?}"))?;

    let mut scored = candidates
        .into_iter()
        .map(|s| {
            let v = embed(&s, provider).with_context(|| format!("embedding sentence of class {label:?}"))?;
            let score = cosine_similarity(&v, &label_vec)
                .with_context(|| format!("scoring {:?} for class {label:?}", s.text()))?;
            Ok((s, score))
        })
        .collect::<Result<Vec<_>>>()?;
    // stable: ties keep document order
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(max_sentences);

    Ok(PrototypeSet {
        class_label: label.to_string(),
        mode: PrototypeMode::Sentences,
        prototypes: scored
            .into_iter()
            .map(|(sentence, score)| Prototype {
                sentence,
                score: Some(score),
            })
            .collect(),
    })
}

/// One prototype: the selected sentences joined by single spaces.
pub fn build_paragraph_prototype(label: &str, sentences: &[Sentence]) -> Result<PrototypeSet> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput(format!(
            "class {label:?}: no sentences to build a paragraph from"
        )));
    }
    let joined = sentences.iter().map(Sentence::text).collect::<Vec<_>>().join(" ");
    Ok(PrototypeSet {
        class_label: label.to_string(),
        mode: PrototypeMode::Paragraph,
        prototypes: vec![Prototype {
            sentence: Sentence::new(&joined, Origin::Document),
            score: None,
        }],
    })
}

/// One prototype: the normalized class label itself.
pub fn build_label_prototype(label: &str) -> Result<PrototypeSet> {
    let text = normalize_label(label);
    if text.is_empty() {
        return Err(Error::Data("empty class label".into()));
    }
    Ok(PrototypeSet {
        class_label: label.to_string(),
        mode: PrototypeMode::LabelOnly,
        prototypes: vec![Prototype {
            sentence: Sentence::new(&text, Origin::Document),
            score: None,
        }],
    })
}

/// Lowercases a class label and expands `_`, `-` and camel-case
/// boundaries to single spaces: `"ApplyEyeMakeup"` → `"apply eye makeup"`.
pub fn normalize_label(label: &str) -> String {
    let chars: Vec<char> = label.chars().collect();
    let mut out = String::with_capacity(label.len() + 4);
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' || c == '-' || c.is_whitespace() {
            out.push(' ');
            continue;
        }
        if c.is_uppercase() && i > 0 {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                out.push(' ');
            }
        }
        out.extend(c.to_lowercase());
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Selection settings recorded with each stored prototype set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub min_words: usize,
    pub max_sentences: usize,
    pub embedder_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPrototype {
    pub text: String,
    pub score: Option<f64>,
}

/// One line of a prototype store file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeRecord {
    pub class: String,
    pub mode: PrototypeMode,
    pub prototypes: Vec<StoredPrototype>,
    pub config: StoreConfig,
}

impl PrototypeRecord {
    pub fn from_set(set: &PrototypeSet, config: &StoreConfig) -> Self {
        Self {
            class: set.class_label.clone(),
            mode: set.mode,
            prototypes: set
                .prototypes
                .iter()
                .map(|p| StoredPrototype {
                    text: p.sentence.text().to_string(),
                    score: p.score,
                })
                .collect(),
            config: config.clone(),
        }
    }

    pub fn to_set(&self) -> PrototypeSet {
        PrototypeSet {
            class_label: self.class.clone(),
            mode: self.mode,
            prototypes: self
                .prototypes
                .iter()
                .map(|p| Prototype {
                    sentence: Sentence::new(&p.text, Origin::Document),
                    score: p.score,
                })
                .collect(),
        }
    }
}

pub fn prototype_store_bytes(sets: &[PrototypeSet], config: &StoreConfig) -> Result<Vec<u8>> {
    let records: Vec<PrototypeRecord> = sets.iter().map(|s| PrototypeRecord::from_set(s, config)).collect();
    crate::observers::jsonl_bytes(&records)
}

pub fn write_prototype_store(path: &Path, sets: &[PrototypeSet], config: &StoreConfig) -> Result<()> {
    std::fs::write(path, prototype_store_bytes(sets, config)?).map_err(|e| Error::io(path, e))
}

pub fn read_prototype_store(path: &Path) -> Result<Vec<PrototypeSet>> {
    let records: Vec<PrototypeRecord> = crate::observers::read_jsonl(path)?;
    if records.is_empty() {
        return Err(Error::EmptyInput(format!("{} holds no prototype sets", path.display())));
    }
    Ok(records.iter().map(PrototypeRecord::to_set).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::EmbeddingVector;

    /// Scores a sentence by a fixed lookup so ties can be forced.
    struct FixedScores(Vec<(&'static str, Vec<f64>)>);

    impl EmbeddingProvider for FixedScores {
        fn id(&self) -> &str {
            "fixed"
        }
        fn dim(&self) -> usize {
            2
        }
        fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
            let v = self
                .0
                .iter()
                .find(|(t, _)| *t == text)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::LookupMiss(text.into()))?;
            EmbeddingVector::new(v, "fixed")
        }
    }

    fn s(t: &str) -> Sentence {
        Sentence::new(t, Origin::Document)
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_label("fencing"), "fencing");
        assert_eq!(normalize_label("horse_riding"), "horse riding");
        assert_eq!(normalize_label("YoYo"), "yo yo");
        assert_eq!(normalize_label("ApplyEyeMakeup"), "apply eye makeup");
        assert_eq!(normalize_label("UCFTest"), "ucf test");
        assert_eq!(normalize_label("sumo-wrestling  x"), "sumo wrestling x");
    }

    #[test]
    fn label_prototype() {
        let p = build_label_prototype("horse_riding").unwrap();
        assert_eq!(p.mode, PrototypeMode::LabelOnly);
        assert_eq!(p.texts().collect::<Vec<_>>(), ["horse riding"]);
    }

    #[test]
    fn paragraph_prototype() {
        let p = build_paragraph_prototype("c", &[s("a."), s("b.")]).unwrap();
        assert_eq!(p.texts().collect::<Vec<_>>(), ["a. b."]);
        assert_eq!(p.mode, PrototypeMode::Paragraph);
        assert!(build_paragraph_prototype("c", &[]).is_err());
    }

    #[test]
    fn min_word_threshold_is_inclusive() {
        let input: Vec<Sentence> = [3, 9, 10, 15].iter().map(|&n| s(&vec!["w"; n].join(" "))).collect();
        let kept: Vec<usize> = filter_min_words(&input, 10).iter().map(Sentence::word_count).collect();
        assert_eq!(kept, [10, 15]);
        assert_eq!(filter_min_words(&input, 1), input);
    }

    #[test]
    fn ties_keep_document_order() {
        let provider = FixedScores(vec![
            ("x", vec![1.0, 0.0]),
            ("first", vec![1.0, 1.0]),
            ("second", vec![2.0, 2.0]),
            ("third", vec![1.0, 0.0]),
            ("fourth", vec![0.0, 1.0]),
        ]);
        let sentences = [s("fourth"), s("first"), s("second"), s("third")];
        let set = select_prototypes("x", &sentences, &provider, 1, 3).unwrap();
        assert_eq!(set.texts().collect::<Vec<_>>(), ["third", "first", "second"]);
    }

    #[test]
    fn zero_survivors_is_a_config_error() {
        let provider = FixedScores(vec![]);
        let err = select_prototypes("fencing", &[s("too short")], &provider, 10, 10).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("fencing") && msg.contains("10"), "{msg}");
    }
}
