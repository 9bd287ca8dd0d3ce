use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifier::ClassifyOptions;
use crate::error::{Error, Result};
use crate::evaluation::Protocol;
use crate::observers::{ObserverKind, ObserverSpec};
use crate::text::{PrototypeMode, DEFAULT_MAX_SENTENCES, DEFAULT_MIN_WORDS};

/// Environment variable naming the default root for relative paths.
pub const DATA_DIR_ENV: &str = "ZSAR_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    /// Directory of `<ClassLabel>.txt` description documents.
    pub descriptions: PathBuf,
    /// TSV of `video_id<TAB>class_label`.
    pub ground_truth: PathBuf,
    /// Directory of `<OBSERVER>.jsonl` caption files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrototypeConfig {
    pub mode: PrototypeMode,
    pub min_words: usize,
    pub max_sentences: usize,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        Self {
            mode: PrototypeMode::Sentences,
            min_words: DEFAULT_MIN_WORDS,
            max_sentences: DEFAULT_MAX_SENTENCES,
        }
    }
}

/// Provider specs (`bow`, `bow:DIM`, `table:PATH`, `toy:PATH`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpecs {
    /// Used to rank document sentences against the label.
    pub selection: String,
    /// Used for the joint space.
    pub joint: String,
}

impl Default for EmbedderSpecs {
    fn default() -> Self {
        Self {
            selection: "bow".into(),
            joint: "bow".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: String,
    /// Root for relative paths; defaults to `$ZSAR_DATA_DIR`, then the
    /// config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    pub paths: PathsConfig,
    /// Explicit observers; when empty, every caption file is an observer.
    #[serde(default)]
    pub observers: Vec<ObserverSpec>,
    /// Observer subset to fuse; all observers when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_observers: Option<Vec<String>>,
    #[serde(default)]
    pub prototypes: PrototypeConfig,
    #[serde(default)]
    pub embedders: EmbedderSpecs,
    #[serde(default)]
    pub classify: ClassifyOptions,
    #[serde(default)]
    pub protocol: Protocol,
    /// Sanity ablation: rotate prototype sets across class labels.
    #[serde(default)]
    pub shuffle_prototype_labels: bool,
    #[serde(default)]
    pub seed: u64,
}

/// Sets `dotted.key` in a JSON tree. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty segment in override key {key:?}")));
        }
        let obj = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just set")
            }
            _ => {
                return Err(Error::Config(format!(
                    "override {key:?}: {part} is not inside an object"
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split yields at least one segment")
}

impl PipelineConfig {
    /// Reads a config file, applies overrides and fixes the path root.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tree: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let mut config: Self =
            serde_json::from_value(tree).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if config.root.is_none() {
            config.root = Some(match std::env::var_os(DATA_DIR_ENV) {
                Some(dir) => PathBuf::from(dir),
                None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
            });
        }
        Ok(config)
    }

    pub fn root(&self) -> PathBuf {
        self.root
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_default()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.root().join(p)
        } else {
            p.to_path_buf()
        }
    }

    /// Observer specs with resolved paths; caption files when none are listed.
    pub fn observer_specs(&self) -> Result<Vec<ObserverSpec>> {
        if !self.observers.is_empty() {
            return Ok(self
                .observers
                .iter()
                .map(|o| {
                    let mut o = o.clone();
                    o.source = self.resolve(&o.source);
                    o.features = o
                        .features
                        .as_deref()
                        .or(self.paths.features.as_deref())
                        .map(|f| self.resolve(f));
                    o
                })
                .collect());
        }
        let dir = self
            .paths
            .captions
            .as_ref()
            .ok_or_else(|| Error::Config("paths.captions is required when no observers are listed".into()))?;
        let dir = self.resolve(dir);
        let mut specs = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
                if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                    specs.push(ObserverSpec::file_backed(id, path.clone()));
                }
            }
        }
        specs.sort_by(|a, b| a.observer_id.cmp(&b.observer_id));
        Ok(specs)
    }
}

/// One problem found by [`validate_config`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn check_provider_spec(config: &PipelineConfig, field: &str, spec: &str, issues: &mut Vec<ConfigIssue>) {
    let mut issue = |message: String| {
        issues.push(ConfigIssue {
            field: field.to_string(),
            message,
        })
    };
    match spec.split_once(':') {
        Some(("toy" | "table", path)) => {
            if !config.resolve(Path::new(path)).is_file() {
                issue(format!("provider file {path} does not exist"));
            }
        }
        Some(("bow", dim)) => {
            if dim.parse::<usize>().map_or(true, |d| d == 0) {
                issue(format!("bad bag-of-words dimension {dim:?}"));
            }
        }
        None if spec == "bow" => {}
        _ => issue(format!("unknown provider {spec:?}")),
    }
}

/// Checks every path, id and cross-reference, collecting all problems.
pub fn validate_config(config: &PipelineConfig) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    let mut push = |field: &str, message: String| {
        issues.push(ConfigIssue {
            field: field.to_string(),
            message,
        })
    };
    let p = &config.paths;
    if !config.resolve(&p.descriptions).is_dir() {
        push(
            "paths.descriptions",
            format!("{} is not a directory", p.descriptions.display()),
        );
    }
    if !config.resolve(&p.ground_truth).is_file() {
        push(
            "paths.ground_truth",
            format!("{} does not exist", p.ground_truth.display()),
        );
    }
    if let Some(c) = &p.captions {
        if !config.resolve(c).is_dir() {
            push("paths.captions", format!("{} is not a directory", c.display()));
        }
    } else if config.observers.is_empty() {
        push("paths.captions", "required when no observers are listed".into());
    }
    if let Some(f) = &p.features {
        if !config.resolve(f).is_dir() {
            push("paths.features", format!("{} is not a directory", f.display()));
        }
    }
    if config.dataset.trim().is_empty() {
        push("dataset", "must not be empty".into());
    }

    let mut ids = BTreeSet::new();
    for (i, o) in config.observers.iter().enumerate() {
        let field = format!("observers[{i}]");
        if !ids.insert(o.observer_id.clone()) {
            push(&field, format!("duplicate observer id {}", o.observer_id));
        }
        if !config.resolve(&o.source).is_file() {
            push(&field, format!("source {} does not exist", o.source.display()));
        }
        if o.kind != ObserverKind::FileBacked && o.features.is_none() && p.features.is_none() {
            push(&field, format!("observer {} needs a features directory", o.observer_id));
        }
        if o.max_len == 0 {
            push(&field, "max_len must be positive".into());
        }
    }
    if config.observers.is_empty() {
        if let Ok(specs) = config.observer_specs() {
            ids.extend(specs.into_iter().map(|s| s.observer_id));
            if ids.is_empty() {
                push("paths.captions", "no caption files found".into());
            }
        }
    }
    if let Some(active) = &config.active_observers {
        if active.is_empty() {
            push("active_observers", "must not be empty".into());
        }
        for id in active {
            if !ids.contains(id) {
                push("active_observers", format!("unknown observer id {id}"));
            }
        }
    }

    if config.prototypes.min_words == 0 {
        push("prototypes.min_words", "must be at least 1".into());
    }
    if config.prototypes.max_sentences == 0 {
        push("prototypes.max_sentences", "must be at least 1".into());
    }
    check_provider_spec(config, "embedders.selection", &config.embedders.selection, &mut issues);
    check_provider_spec(config, "embedders.joint", &config.embedders.joint, &mut issues);
    if let Err(e) = config.protocol.validate() {
        issues.push(ConfigIssue {
            field: "protocol".into(),
            message: e.to_string(),
        });
    }
    issues
}
