//! Caption sources ("observers") and their fusion into one description per
//! video.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::captioner::{load_video_features, Architecture, Captioner, Modality};
use crate::error::{Error, Result};
use crate::text::{Origin, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverKind {
    FileBacked,
    ToyTransformer,
    ToyBmt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverSpec {
    pub observer_id: String,
    pub kind: ObserverKind,
    /// Caption JSON-lines file, or a saved captioner model.
    pub source: PathBuf,
    /// Feature directory for model-backed observers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Second stream of a bi-modal observer.
    #[serde(default = "default_asm")]
    pub asm_modality: Modality,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_asm() -> Modality {
    Modality::Audio
}

fn default_max_len() -> usize {
    20
}

impl ObserverSpec {
    pub fn file_backed(observer_id: impl Into<String>, source: impl Into<PathBuf>) -> Self {
        Self {
            observer_id: observer_id.into(),
            kind: ObserverKind::FileBacked,
            source: source.into(),
            features: None,
            asm_modality: default_asm(),
            max_len: default_max_len(),
        }
    }
}

/// One line of a caption file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub video_id: String,
    pub observer_id: String,
    pub sentence: String,
}

pub fn read_caption_records(path: &Path) -> Result<Vec<CaptionRecord>> {
    read_jsonl(path)
}

pub fn write_caption_records(path: &Path, records: &[CaptionRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub(crate) fn jsonl_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let buf = jsonl_bytes(rows)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Order observer ids by text prefix, then numeric suffix, so `OB2 < OB10`.
pub fn canonical_order(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let cut = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        (&s[..cut], s[cut..].parse().ok())
    }
    split(a).cmp(&split(b)).then_with(|| a.cmp(b))
}

/// Concatenation of per-observer sentences for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedDescription {
    pub video_id: String,
    pub sentence: Sentence,
    pub parts: Vec<(String, Sentence)>,
}

/// Joins the parts with single spaces, in the given order.
pub fn fuse(video_id: &str, parts: Vec<(String, Sentence)>) -> Result<FusedDescription> {
    if parts.is_empty() {
        return Err(Error::EmptyInput(format!("no observer output to fuse for {video_id}")));
    }
    let text = parts.iter().map(|(_, s)| s.text()).collect::<Vec<_>>().join(" ");
    Ok(FusedDescription {
        video_id: video_id.to_string(),
        sentence: Sentence::new(&text, Origin::Fused),
        parts,
    })
}

enum Source {
    Captions(HashMap<String, Sentence>),
    Model { model: Box<Captioner>, features: PathBuf },
}

/// A caption source with lazily opened backing data.
pub struct Observer {
    spec: ObserverSpec,
    source: OnceLock<Result<Source, String>>,
    log: AccessLog,
}

/// Records which observer sources were opened, in order.
#[derive(Debug, Clone, Default)]
pub struct AccessLog(Arc<Mutex<Vec<String>>>);

impl AccessLog {
    pub fn entries(&self) -> Vec<String> {
        self.0.lock().expect("access log poisoned").clone()
    }

    fn record(&self, observer_id: &str) {
        self.0
            .lock()
            .expect("access log poisoned")
            .push(observer_id.to_string());
    }
}

impl Observer {
    pub fn new(spec: ObserverSpec, log: AccessLog) -> Self {
        Self {
            spec,
            source: OnceLock::new(),
            log,
        }
    }

    pub fn id(&self) -> &str {
        &self.spec.observer_id
    }

    pub fn spec(&self) -> &ObserverSpec {
        &self.spec
    }

    fn source(&self) -> Result<&Source> {
        self.source
            .get_or_init(|| {
                self.log.record(&self.spec.observer_id);
                self.open().map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|msg| Error::Data(format!("observer {}: {msg}", self.spec.observer_id)))
    }

    fn open(&self) -> Result<Source> {
        let spec = &self.spec;
        match spec.kind {
            ObserverKind::FileBacked => {
                let mut map = HashMap::new();
                for rec in read_caption_records(&spec.source)? {
                    if rec.observer_id != spec.observer_id {
                        continue;
                    }
                    let sentence = Sentence::new(&rec.sentence, Origin::Observer);
                    if map.insert(rec.video_id.clone(), sentence).is_some() {
                        return Err(Error::Data(format!(
                            "{} has two captions for {}",
                            spec.source.display(),
                            rec.video_id
                        )));
                    }
                }
                Ok(Source::Captions(map))
            }
            ObserverKind::ToyTransformer | ObserverKind::ToyBmt => {
                let model = Captioner::load(&spec.source)?;
                let expected = match spec.kind {
                    ObserverKind::ToyBmt => Architecture::Bmt,
                    _ => Architecture::Transformer,
                };
                if model.config().arch != expected {
                    return Err(Error::Config(format!(
                        "{} is a {:?} model, observer kind is {:?}",
                        spec.source.display(),
                        model.config().arch,
                        spec.kind
                    )));
                }
                let features = spec
                    .features
                    .clone()
                    .ok_or_else(|| Error::Config("model-backed observer needs a features directory".into()))?;
                Ok(Source::Model {
                    model: Box::new(model),
                    features,
                })
            }
        }
    }

    /// One sentence for `video_id`. Empty captions are errors.
    pub fn describe(&self, video_id: &str) -> Result<Sentence> {
        let sentence = match self.source()? {
            Source::Captions(map) => map.get(video_id).cloned().ok_or_else(|| {
                Error::Data(format!(
                    "observer {} has no caption for video {video_id}",
                    self.spec.observer_id
                ))
            })?,
            Source::Model { model, features } => {
                let asm = (model.config().arch == Architecture::Bmt).then_some(self.spec.asm_modality);
                let video = load_video_features(features, video_id, asm)?;
                model.generate(&video, self.spec.max_len)?
            }
        };
        if sentence.is_empty() {
            return Err(Error::Data(format!(
                "observer {} produced an empty caption for {video_id}",
                self.spec.observer_id
            )));
        }
        Ok(sentence.with_origin(Origin::Observer))
    }
}

/// All observers of a run, keyed by id.
pub struct ObserverSet {
    observers: BTreeMap<String, Observer>,
    log: AccessLog,
}

impl ObserverSet {
    pub fn new(specs: Vec<ObserverSpec>) -> Result<Self> {
        let log = AccessLog::default();
        let mut observers = BTreeMap::new();
        for spec in specs {
            let id = spec.observer_id.clone();
            if id.trim().is_empty() {
                return Err(Error::Config("empty observer id".into()));
            }
            if observers.insert(id.clone(), Observer::new(spec, log.clone())).is_some() {
                return Err(Error::Config(format!("duplicate observer id {id}")));
            }
        }
        Ok(Self { observers, log })
    }

    /// File-backed observers for every `<ID>.jsonl` in `dir`.
    pub fn from_caption_dir(dir: &Path) -> Result<Self> {
        let mut specs = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
                if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                    specs.push(ObserverSpec::file_backed(id, path.clone()));
                }
            }
        }
        Self::new(specs)
    }

    pub fn access_log(&self) -> &AccessLog {
        &self.log
    }

    /// Every observer id in canonical order.
    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.observers.keys().cloned().collect();
        ids.sort_by(|a, b| canonical_order(a, b));
        ids
    }

    pub fn get(&self, id: &str) -> Result<&Observer> {
        self.observers
            .get(id)
            .ok_or_else(|| Error::Config(format!("unknown observer {id}")))
    }

    /// Validates `subset` and returns it deduplicated in canonical order.
    pub fn subset<S: AsRef<str>>(&self, subset: &[S]) -> Result<Vec<String>> {
        if subset.is_empty() {
            return Err(Error::Config("empty observer subset".into()));
        }
        let mut ids = BTreeSet::new();
        for id in subset {
            self.get(id.as_ref())?;
            ids.insert(id.as_ref().to_string());
        }
        let mut ids: Vec<String> = ids.into_iter().collect();
        ids.sort_by(|a, b| canonical_order(a, b));
        Ok(ids)
    }

    /// Fused description of one video over `subset`, in canonical order.
    pub fn describe_fused<S: AsRef<str>>(&self, video_id: &str, subset: &[S]) -> Result<FusedDescription> {
        let ids = self.subset(subset)?;
        let parts = ids
            .into_iter()
            .map(|id| Ok((id.clone(), self.get(&id)?.describe(video_id)?)))
            .collect::<Result<Vec<_>>>()?;
        fuse(video_id, parts)
    }

    /// [`describe_fused`](Self::describe_fused) for every video, in input order.
    pub fn observer_subset<S: AsRef<str> + Sync>(
        &self,
        video_ids: &[String],
        subset: &[S],
    ) -> Result<Vec<FusedDescription>> {
        self.subset(subset)?;
        video_ids.par_iter().map(|v| self.describe_fused(v, subset)).collect()
    }
}

/// Captions from a model for every listed video.
pub fn run_captioner(
    model: &Captioner,
    features: &Path,
    video_ids: &[String],
    observer_id: &str,
    asm_modality: Modality,
    max_len: usize,
) -> Result<Vec<CaptionRecord>> {
    let asm = (model.config().arch == Architecture::Bmt).then_some(asm_modality);
    video_ids
        .par_iter()
        .map(|id| {
            let video = load_video_features(features, id, asm)?;
            Ok(CaptionRecord {
                video_id: id.clone(),
                observer_id: observer_id.to_string(),
                sentence: model.generate(&video, max_len)?.text().to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FusedRecord {
    video_id: String,
    sentence: String,
    parts: Vec<CaptionRecord>,
}

pub fn write_fused(path: &Path, fused: &[FusedDescription]) -> Result<()> {
    let bytes = fused_bytes(fused)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn fused_bytes(fused: &[FusedDescription]) -> Result<Vec<u8>> {
    let rows: Vec<FusedRecord> = fused
        .iter()
        .map(|f| FusedRecord {
            video_id: f.video_id.clone(),
            sentence: f.sentence.text().to_string(),
            parts: f
                .parts
                .iter()
                .map(|(o, s)| CaptionRecord {
                    video_id: f.video_id.clone(),
                    observer_id: o.clone(),
                    sentence: s.text().to_string(),
                })
                .collect(),
        })
        .collect();
    jsonl_bytes(&rows)
}

pub fn read_fused(path: &Path) -> Result<Vec<FusedDescription>> {
    read_jsonl::<FusedRecord>(path)?
        .into_iter()
        .map(|r| {
            let parts = r
                .parts
                .into_iter()
                .map(|p| (p.observer_id, Sentence::new(&p.sentence, Origin::Observer)))
                .collect();
            let fused = fuse(&r.video_id, parts)?;
            if fused.sentence.text() != Sentence::new(&r.sentence, Origin::Fused).text() {
                return Err(Error::Data(format!(
                    "{}: fused text of {} does not match its parts",
                    path.display(),
                    r.video_id
                )));
            }
            Ok(fused)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(t: &str) -> Sentence {
        Sentence::new(t, Origin::Observer)
    }

    #[test]
    fn fuse_examples() {
        let one = fuse("v", vec![("OB1".into(), s("a man fences"))]).unwrap();
        assert_eq!(one.sentence.text(), "a man fences");
        assert_eq!(one.sentence.origin(), Origin::Fused);
        let two = fuse("v", vec![("OB1".into(), s("a.")), ("OB2".into(), s("b."))]).unwrap();
        assert_eq!(two.sentence.text(), "a. b.");
        assert!(fuse("v", vec![]).is_err());
    }

    #[test]
    fn canonical_ordering() {
        let mut ids = vec!["OB10", "OB2", "OB1", "A3"];
        ids.sort_by(|a, b| canonical_order(a, b));
        assert_eq!(ids, vec!["A3", "OB1", "OB2", "OB10"]);
    }
}
