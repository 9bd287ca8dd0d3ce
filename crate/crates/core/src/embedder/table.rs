use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

/// Precomputed vectors looked up by exact sentence text.
///
/// File format: a `#dim=<n> id=<embedder_id>` header, then one
/// tab-separated record per line: the text followed by `n` floats.
#[derive(Debug, Clone)]
pub struct TableProvider {
    id: String,
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl TableProvider {
    pub fn new(id: impl Into<String>, dim: usize) -> Self {
        Self {
            id: id.into(),
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, text: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::Dimension(format!(
                "vector for {text:?} has {} components, table dim is {}",
                values.len(),
                self.dim
            )));
        }
        if let Some(existing) = self.vectors.get(text) {
            if *existing != values {
                return Err(Error::Data(format!("conflicting vectors for {text:?}")));
            }
        }
        self.vectors.insert(text.to_string(), values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content, path)
    }

    pub fn parse(content: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = content.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing #dim header".into()))?;
        let (dim, id) = parse_header(header)
            .ok_or_else(|| parse_err(1, format!("expected `#dim=<n> id=<id>`, found {header:?}")))?;
        let mut table = Self::new(id, dim);
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let text = fields.next().unwrap_or_default();
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(i + 1, e.to_string()))?;
            if values.len() != dim {
                return Err(Error::Dimension(format!(
                    "{}:{}: expected {dim} values, found {}",
                    path.display(),
                    i + 1,
                    values.len()
                )));
            }
            table
                .insert(text, values)
                .map_err(|e| e.context(format!("{}:{}", path.display(), i + 1)))?;
        }
        Ok(table)
    }

    /// Serializes `records` in file order. Floats use the shortest
    /// round-trip representation.
    pub fn render(id: &str, dim: usize, records: &[(String, Vec<f64>)]) -> Result<String> {
        let mut out = format!("#dim={dim} id={id}\n");
        for (text, values) in records {
            if text.contains(['\t', '\n', '\r']) {
                return Err(Error::Data(format!("sentence {text:?} contains a tab or newline")));
            }
            if values.len() != dim {
                return Err(Error::Dimension(format!(
                    "vector for {text:?} has {} components, expected {dim}",
                    values.len()
                )));
            }
            out.push_str(text);
            for v in values {
                write!(out, "\t{v}").expect("write to string");
            }
            out.push('\n');
        }
        Ok(out)
    }
}

fn parse_header(line: &str) -> Option<(usize, String)> {
    let rest = line.strip_prefix('#')?;
    let mut dim = None;
    let mut id = None;
    for part in rest.split_whitespace() {
        if let Some(d) = part.strip_prefix("dim=") {
            dim = d.parse().ok();
        } else if let Some(i) = part.strip_prefix("id=") {
            id = Some(i.to_string());
        }
    }
    Some((dim.filter(|&d| d > 0)?, id?))
}

impl EmbeddingProvider for TableProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let values = self
            .vectors
            .get(text)
            .ok_or_else(|| Error::LookupMiss(text.to_string()))?;
        EmbeddingVector::new(values.clone(), self.id.clone())
    }
}
