use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::Result;

/// Memoizes another provider by exact text and counts the texts it had to
/// embed.
pub struct CachingProvider {
    inner: Arc<dyn EmbeddingProvider>,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
    misses: AtomicUsize,
}

impl CachingProvider {
    pub fn new(inner: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
            misses: AtomicUsize::new(0),
        }
    }

    /// Number of texts passed through to the wrapped provider.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

impl EmbeddingProvider for CachingProvider {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        if let Some(v) = self.cache.lock().expect("cache poisoned").get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed_text(text)?;
        let mut cache = self.cache.lock().expect("cache poisoned");
        if !cache.contains_key(text) {
            self.misses.fetch_add(1, Ordering::Relaxed);
            cache.insert(text.to_string(), v.clone());
        }
        Ok(v)
    }
}
