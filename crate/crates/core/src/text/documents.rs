use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A free-text description of one action class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    class_label: String,
    body: String,
    source_id: String,
}

impl RawDocument {
    pub fn new(class_label: impl Into<String>, body: impl Into<String>, source_id: impl Into<String>) -> Result<Self> {
        let doc = Self::new_unchecked(class_label, body, source_id);
        if doc.class_label.trim().is_empty() {
            return Err(Error::Data(format!(
                "document {} has an empty class label",
                doc.source_id
            )));
        }
        if doc.body.trim().is_empty() {
            return Err(Error::EmptyInput(format!(
                "document for class {:?} has an empty body",
                doc.class_label
            )));
        }
        Ok(doc)
    }

    pub(crate) fn new_unchecked(
        class_label: impl Into<String>,
        body: impl Into<String>,
        source_id: impl Into<String>,
    ) -> Self {
        Self {
            class_label: class_label.into(),
            body: body.into(),
            source_id: source_id.into(),
        }
    }

    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

/// Reads every `<class>.txt` in `dir`, sorted by class label.
pub fn load_documents(dir: &Path) -> Result<Vec<RawDocument>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut docs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let Some(label) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        docs.push(RawDocument::new(label, body, path.display().to_string())?);
    }
    docs.sort_by(|a, b| a.class_label.cmp(&b.class_label));
    Ok(docs)
}
