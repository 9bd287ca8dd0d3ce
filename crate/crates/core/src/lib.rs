//! Sentence-based zero-shot action recognition.
//!
//! Videos are described by captioning observers, classes by sentences
//! selected from description documents. Both sides are embedded by one
//! sentence embedder and each video takes the class of its most similar
//! prototype sentence.

pub mod captioner;
pub mod classifier;
pub mod embedder;
pub mod error;
pub mod evaluation;
pub mod observers;
pub mod pipeline;
pub mod tensor;
pub mod text;
pub mod vocab;

pub use error::{Error, Result};
