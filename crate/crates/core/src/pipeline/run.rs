use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{validate_config, PipelineConfig, PrototypeConfig};
use crate::classifier::{
    batch_classify, build_joint_space, confusion_matrix, ClassificationResult, ClassifyOptions, ConfusionMatrix,
    JointSpace,
};
use crate::embedder::{load_provider, CachingProvider, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::evaluation::{accuracy, derive_seed, protocol_splits, summarize, Protocol, Split, SummaryStats};
use crate::observers::{fused_bytes, jsonl_bytes, FusedDescription, ObserverSet};
use crate::text::{
    build_label_prototype, build_paragraph_prototype, expand_contractions, load_documents, prototype_store_bytes,
    select_prototypes, split_sentences, PrototypeMode, PrototypeSet, RawDocument, StoreConfig,
};

/// Reads `video_id<TAB>class_label` lines; `#` starts a comment line.
pub fn load_ground_truth(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut truth = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (video, class) = line
            .split_once('\t')
            .map(|(v, c)| (v.trim(), c.trim()))
            .filter(|(v, c)| !v.is_empty() && !c.is_empty())
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected video_id<TAB>class_label".into(),
            })?;
        if truth.insert(video.to_string(), class.to_string()).is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("video {video} listed twice"),
            });
        }
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput(format!("{} lists no videos", path.display())));
    }
    Ok(truth)
}

pub fn write_ground_truth(path: &Path, truth: &BTreeMap<String, String>) -> Result<()> {
    let text: String = truth.iter().map(|(v, c)| format!("{v}\t{c}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Prototype sets for `classes` (sorted output) under one configuration.
pub fn build_prototypes(
    documents: &[RawDocument],
    classes: &[String],
    config: &PrototypeConfig,
    selection: &dyn EmbeddingProvider,
) -> Result<Vec<PrototypeSet>> {
    let by_label: HashMap<&str, &RawDocument> = documents.iter().map(|d| (d.class_label(), d)).collect();
    let mut classes = classes.to_vec();
    classes.sort();
    classes.dedup();
    classes
        .par_iter()
        .map(|class| {
            if config.mode == PrototypeMode::LabelOnly {
                return build_label_prototype(class);
            }
            let doc = by_label
                .get(class.as_str())
                .ok_or_else(|| Error::Data(format!("no description document for class {class}")))?;
            let sentences: Vec<_> = split_sentences(doc)?.iter().map(expand_contractions).collect();
            match config.mode {
                PrototypeMode::Paragraph => build_paragraph_prototype(class, &sentences),
                _ => select_prototypes(class, &sentences, selection, config.min_words, config.max_sentences),
            }
        })
        .collect()
}

/// Moves each class's prototypes to the next class label (cyclically), so
/// no class keeps its own description.
pub fn shuffle_prototype_labels(sets: &[PrototypeSet]) -> Vec<PrototypeSet> {
    let n = sets.len();
    (0..n)
        .map(|i| PrototypeSet {
            class_label: sets[i].class_label.clone(),
            ..sets[(i + 1) % n].clone()
        })
        .collect()
}

/// Classification results and accuracy of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub split: Split,
    pub results: Vec<ClassificationResult>,
    pub accuracy: f64,
}

/// Loaded inputs of a pipeline run, with per-spec provider caches shared
/// across stages and sweeps.
pub struct Engine {
    config: PipelineConfig,
    truth: BTreeMap<String, String>,
    classes: Vec<String>,
    documents: Vec<RawDocument>,
    observers: ObserverSet,
    providers: Mutex<HashMap<String, Arc<CachingProvider>>>,
}

impl Engine {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let issues = validate_config(&config);
        if !issues.is_empty() {
            let msg: Vec<String> = issues.iter().map(ToString::to_string).collect();
            return Err(Error::Config(msg.join("; ")));
        }
        let truth = load_ground_truth(&config.resolve(&config.paths.ground_truth))?;
        let mut classes: Vec<String> = truth.values().cloned().collect();
        classes.sort();
        classes.dedup();
        let documents = load_documents(&config.resolve(&config.paths.descriptions))?;
        let observers = ObserverSet::new(config.observer_specs()?)?;
        Ok(Self {
            config,
            truth,
            classes,
            documents,
            observers,
            providers: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn truth(&self) -> &BTreeMap<String, String> {
        &self.truth
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn observers(&self) -> &ObserverSet {
        &self.observers
    }

    /// Cached provider for `spec`; one instance per spec for the engine's
    /// lifetime.
    pub fn provider(&self, spec: &str) -> Result<Arc<CachingProvider>> {
        let mut map = self.providers.lock().expect("provider cache poisoned");
        if let Some(p) = map.get(spec) {
            return Ok(p.clone());
        }
        let inner = load_provider(spec, Some(&self.config.root()))?;
        let p = Arc::new(CachingProvider::new(inner));
        map.insert(spec.to_string(), p.clone());
        Ok(p)
    }

    pub fn prototypes(&self, config: &PrototypeConfig, selection: &str) -> Result<Vec<PrototypeSet>> {
        let provider = self.provider(selection)?;
        let sets = build_prototypes(&self.documents, &self.classes, config, provider.as_ref())?;
        Ok(if self.config.shuffle_prototype_labels {
            shuffle_prototype_labels(&sets)
        } else {
            sets
        })
    }

    /// Configured observer subset in canonical order.
    pub fn active_observers(&self) -> Result<Vec<String>> {
        match &self.config.active_observers {
            Some(ids) => self.observers.subset(ids),
            None => Ok(self.observers.ids()),
        }
    }

    /// Fused descriptions of every ground-truth video.
    pub fn fused(&self, subset: &[String]) -> Result<Vec<FusedDescription>> {
        let videos: Vec<String> = self.truth.keys().cloned().collect();
        self.observers.observer_subset(&videos, subset)
    }

    /// The configured protocol, with its split seed derived from the run seed
    /// when not given.
    pub fn protocol(&self) -> Protocol {
        let mut p = self.config.protocol.clone();
        p.seed.get_or_insert_with(|| derive_seed(self.config.seed, "evaluate"));
        p
    }

    pub fn splits(&self) -> Result<Vec<Split>> {
        protocol_splits(&self.classes, &self.protocol())
    }

    pub fn joint_space(&self, prototypes: &[PrototypeSet], joint: &str) -> Result<JointSpace> {
        build_joint_space(prototypes, self.provider(joint)?.as_ref())
    }

    /// Classifies the videos of each split's unseen classes against those
    /// classes only.
    pub fn classify_splits(
        &self,
        space: &JointSpace,
        fused: &[FusedDescription],
        joint: &str,
        options: ClassifyOptions,
        splits: &[Split],
    ) -> Result<Vec<RunResult>> {
        let provider = self.provider(joint)?;
        splits
            .iter()
            .map(|split| {
                let restricted = space.restrict(&split.unseen)?;
                let videos: Vec<FusedDescription> = fused
                    .iter()
                    .filter(|f| split.unseen.binary_search(&self.truth[&f.video_id]).is_ok())
                    .cloned()
                    .collect();
                if videos.is_empty() {
                    return Err(Error::Data(format!("split {} has no test videos", split.run)));
                }
                let results = batch_classify(&videos, &restricted, provider.as_ref(), options)?;
                let acc = accuracy(&results, &self.truth)?;
                Ok(RunResult {
                    split: split.clone(),
                    results,
                    accuracy: acc,
                })
            })
            .collect()
    }

    /// Accuracy summary for one configuration variant, without writing
    /// artifacts.
    pub fn evaluate(
        &self,
        prototypes: &PrototypeConfig,
        selection: &str,
        joint: &str,
        subset: &[String],
        options: ClassifyOptions,
    ) -> Result<(Vec<RunResult>, SummaryStats)> {
        let sets = self.prototypes(prototypes, selection)?;
        let fused = self.fused(subset)?;
        let space = self.joint_space(&sets, joint)?;
        let runs = self.classify_splits(&space, &fused, joint, options, &self.splits()?)?;
        let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let summary = summarize(&accs, 0.95)?;
        Ok((runs, summary))
    }
}

/// Confusion counts pooled over every run.
pub fn pooled_confusion(runs: &[RunResult], truth: &BTreeMap<String, String>) -> Result<ConfusionMatrix> {
    let all: Vec<ClassificationResult> = runs.iter().flat_map(|r| r.results.iter().cloned()).collect();
    confusion_matrix(&all, truth)
}

/// Files written by a run with their SHA-256 digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch, from `SOURCE_DATE_EPOCH` (0 if unset).
    pub created: u64,
    pub artifacts: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files under one directory and remembers their checksums.
pub struct ArtifactWriter {
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.insert(relative.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, relative: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(relative, &bytes)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, relative: &str, rows: &[T]) -> Result<PathBuf> {
        self.write(relative, &jsonl_bytes(rows)?)
    }

    /// Writes the manifest last; it is not listed among its own artifacts.
    /// The config hash ignores the path root so relocated runs compare equal.
    pub fn finish(self, config: &PipelineConfig) -> Result<RunManifest> {
        let hashed = PipelineConfig {
            root: None,
            ..config.clone()
        };
        let manifest = RunManifest {
            tool: "zsar".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: sha256_hex(&serde_json::to_vec(&hashed)?),
            seed: config.seed,
            created: std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|v| v.parse().ok())
                .unwrap_or(0),
            artifacts: self.artifacts,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

/// Per-run line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub unseen_classes: usize,
    pub videos: usize,
    pub accuracy: f64,
}

/// Machine-readable outcome of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub seed: u64,
    pub protocol: Protocol,
    pub observers: Vec<String>,
    pub prototypes: PrototypeConfig,
    pub embedders: super::config::EmbedderSpecs,
    pub classify: ClassifyOptions,
    pub runs: Vec<RunSummary>,
    pub summary: SummaryStats,
    pub per_class_accuracy: BTreeMap<String, Option<f64>>,
}

pub const REPORT_FILE: &str = "report.json";
pub const CONFUSION_FILE: &str = "confusion.csv";

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.context(format!("stage {name}")))
}

/// Runs prep → describe → embed → classify → evaluate, persisting every
/// intermediate artifact and writing the manifest last.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    let engine = stage("config", || Engine::new(config.clone()))?;
    let mut out = ArtifactWriter::new(&config.resolve(&config.paths.output))?;
    let stale = out.dir().join(MANIFEST_FILE);
    if stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }

    let sets = stage("prep", || {
        let sets = engine.prototypes(&config.prototypes, &config.embedders.selection)?;
        let store = StoreConfig {
            min_words: config.prototypes.min_words,
            max_sentences: config.prototypes.max_sentences,
            embedder_id: engine.provider(&config.embedders.selection)?.id().to_string(),
        };
        out.write("prototypes.jsonl", &prototype_store_bytes(&sets, &store)?)?;
        Ok(sets)
    })?;
    let observers = engine.active_observers()?;
    let fused = stage("describe", || {
        let fused = engine.fused(&observers)?;
        out.write("fused.jsonl", &fused_bytes(&fused)?)?;
        Ok(fused)
    })?;
    let space = stage("embed", || {
        let space = engine.joint_space(&sets, &config.embedders.joint)?;
        out.write_jsonl("space.jsonl", space.entries())?;
        Ok(space)
    })?;
    let runs = stage("classify", || {
        let splits = engine.splits()?;
        out.write_json("splits.json", &splits)?;
        let runs = engine.classify_splits(&space, &fused, &config.embedders.joint, config.classify, &splits)?;
        for r in &runs {
            out.write_jsonl(&format!("results/run_{:03}.jsonl", r.split.run), &r.results)?;
        }
        Ok(runs)
    })?;
    stage("evaluate", || {
        let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let summary = summarize(&accs, 0.95)?;
        let confusion = pooled_confusion(&runs, engine.truth())?;
        let report = RunReport {
            dataset: config.dataset.clone(),
            seed: config.seed,
            protocol: engine.protocol(),
            observers: observers.clone(),
            prototypes: config.prototypes.clone(),
            embedders: config.embedders.clone(),
            classify: config.classify,
            runs: runs
                .iter()
                .map(|r| RunSummary {
                    run: r.split.run,
                    seed: r.split.seed,
                    unseen_classes: r.split.unseen.len(),
                    videos: r.results.len(),
                    accuracy: r.accuracy,
                })
                .collect(),
            summary,
            per_class_accuracy: confusion.per_class_accuracy(),
        };
        out.write_json(REPORT_FILE, &report)?;
        let mut csv = String::from("run,seed,unseen_classes,videos,accuracy\n");
        for r in &report.runs {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.run, r.seed, r.unseen_classes, r.videos, r.accuracy
            ));
        }
        out.write("report.csv", csv.as_bytes())?;
        out.write(CONFUSION_FILE, confusion.to_csv().as_bytes())?;
        Ok(())
    })?;
    out.finish(config)
}
