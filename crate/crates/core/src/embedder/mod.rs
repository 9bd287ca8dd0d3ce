//! Sentence embedders: the provider interface, cosine similarity, and the
//! concrete providers (trainable toy encoder, precomputed vector table,
//! word-overlap stub).

mod bow;
mod cache;
mod table;
mod toy;
mod vector;

use std::path::Path;
use std::sync::Arc;

pub use bow::{BagOfWordsProvider, DEFAULT_BOW_DIM};
pub use cache::CachingProvider;
pub use table::TableProvider;
pub use toy::{
    build_capped_vocabulary, train, train_classification_objective, train_regression_objective,
    train_triplet_objective, EmbedderConfig, Objective, Pooling, ToyEncoder, TrainedEmbedder, TrainingExample,
};
pub(crate) use vector::cosine_slices;
pub use vector::{cosine_similarity, embed, EmbeddingProvider, EmbeddingVector};

use crate::error::{Error, Result};

/// Resolves a provider spec: `toy:PATH`, `table:PATH`, `bow` or `bow:DIM`.
///
/// Relative paths are resolved against `root` when given.
pub fn load_provider(spec: &str, root: Option<&Path>) -> Result<Arc<dyn EmbeddingProvider>> {
    let resolve = |p: &str| match root {
        Some(r) if Path::new(p).is_relative() => r.join(p),
        _ => Path::new(p).to_path_buf(),
    };
    match spec.split_once(':') {
        Some(("toy", path)) => Ok(Arc::new(ToyEncoder::load(&resolve(path))?)),
        Some(("table", path)) => Ok(Arc::new(TableProvider::load(&resolve(path))?)),
        Some(("bow", dim)) => {
            let dim = dim
                .parse()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::Config(format!("bad bag-of-words dimension {dim:?}")))?;
            Ok(Arc::new(BagOfWordsProvider::new(dim)))
        }
        None if spec == "bow" => Ok(Arc::new(BagOfWordsProvider::default())),
        _ => Err(Error::Config(format!(
            "unknown provider {spec:?}; expected toy:PATH, table:PATH or bow"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provider_specs() {
        assert_eq!(load_provider("bow", None).unwrap().dim(), DEFAULT_BOW_DIM);
        assert_eq!(load_provider("bow:64", None).unwrap().id(), "bow64");
        assert!(load_provider("bert", None).is_err());
        assert!(load_provider("table:/nonexistent/x.tsv", None).is_err());
    }
}
