//! Joint embedding space and nearest-prototype classification.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::{cosine_slices, embed, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result, ResultExt};
use crate::observers::{read_jsonl, write_jsonl, FusedDescription};
use crate::text::{normalize_label, PrototypeSet};

/// Outcome of a seen/unseen overlap check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisjointReport {
    /// Normalized labels present in both sets, sorted.
    pub overlap: Vec<String>,
}

impl DisjointReport {
    pub fn passed(&self) -> bool {
        self.overlap.is_empty()
    }
}

/// Checks that no label appears in both sets after normalization.
pub fn validate_disjoint<S: AsRef<str>>(seen: &[S], unseen: &[S]) -> DisjointReport {
    let norm = |xs: &[S]| -> BTreeSet<String> { xs.iter().map(|x| normalize_label(x.as_ref())).collect() };
    DisjointReport {
        overlap: norm(seen).intersection(&norm(unseen)).cloned().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceEntry {
    pub class_label: String,
    pub prototype_index: usize,
    pub text: String,
    pub vector: EmbeddingVector,
}

/// Prototype vectors of every candidate class, all from one embedder.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpace {
    embedder_id: String,
    dim: usize,
    entries: Vec<SpaceEntry>,
}

impl JointSpace {
    pub fn new(entries: Vec<SpaceEntry>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::EmptyInput("joint space has no prototypes".into()))?;
        let embedder_id = first.vector.embedder_id().to_string();
        let dim = first.vector.dim();
        for e in &entries {
            if e.vector.embedder_id() != embedder_id {
                return Err(Error::Config(format!(
                    "prototype of {} embedded by {}, space uses {embedder_id}",
                    e.class_label,
                    e.vector.embedder_id()
                )));
            }
            if e.vector.dim() != dim {
                return Err(Error::Dimension(format!(
                    "prototype of {} has dimension {}, space uses {dim}",
                    e.class_label,
                    e.vector.dim()
                )));
            }
        }
        Ok(Self {
            embedder_id,
            dim,
            entries,
        })
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[SpaceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct class labels, sorted.
    pub fn classes(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.class_label.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// The space limited to `classes`; every requested class must be present.
    pub fn restrict<S: AsRef<str>>(&self, classes: &[S]) -> Result<Self> {
        let wanted: BTreeSet<&str> = classes.iter().map(AsRef::as_ref).collect();
        let present: BTreeSet<&str> = self.entries.iter().map(|e| e.class_label.as_str()).collect();
        if let Some(missing) = wanted.difference(&present).next() {
            return Err(Error::Data(format!("class {missing} has no prototypes in the space")));
        }
        Self::new(
            self.entries
                .iter()
                .filter(|e| wanted.contains(e.class_label.as_str()))
                .cloned()
                .collect(),
        )
    }

    /// The space with one prototype removed.
    pub fn without(&self, class_label: &str, prototype_index: usize) -> Result<Self> {
        Self::new(
            self.entries
                .iter()
                .filter(|e| !(e.class_label == class_label && e.prototype_index == prototype_index))
                .cloned()
                .collect(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_jsonl(path)?).with_context(|| format!("space file {}", path.display()))
    }
}

/// Embeds every prototype sentence of every class.
pub fn build_joint_space(prototypes: &[PrototypeSet], provider: &dyn EmbeddingProvider) -> Result<JointSpace> {
    let mut jobs = Vec::new();
    for set in prototypes {
        if set.is_empty() {
            return Err(Error::Data(format!("class {} has no prototypes", set.class_label)));
        }
        for (i, p) in set.prototypes.iter().enumerate() {
            jobs.push((set.class_label.as_str(), i, &p.sentence));
        }
    }
    let entries = jobs
        .par_iter()
        .map(|&(label, i, sentence)| {
            Ok(SpaceEntry {
                class_label: label.to_string(),
                prototype_index: i,
                text: sentence.text().to_string(),
                vector: embed(sentence, provider).with_context(|| format!("prototype {i} of class {label}"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    JointSpace::new(entries)
}

/// How prototype similarities of one class combine into a class score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Similarity of the nearest prototype.
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Config(format!("unknown aggregation {other:?}"))),
        }
    }
}

/// How a video's observer sentences become one vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoRepresentation {
    /// Embed the concatenated description.
    #[default]
    Fused,
    /// Average the unit-normalized embeddings of each observer sentence.
    ObserverMean,
}

impl std::str::FromStr for VideoRepresentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(Self::Fused),
            "observer_mean" => Ok(Self::ObserverMean),
            other => Err(Error::Config(format!("unknown video representation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub aggregation: Aggregation,
    pub representation: VideoRepresentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub video_id: String,
    pub predicted: String,
    pub best_similarity: f64,
    /// Index of the most similar prototype within the predicted class.
    pub nearest_prototype_index: usize,
    pub per_class_best: BTreeMap<String, f64>,
}

/// Scores `query` against the space. Ties between classes go to the
/// lexicographically smallest label.
pub fn classify_vector(
    video_id: &str,
    query: &EmbeddingVector,
    space: &JointSpace,
    aggregation: Aggregation,
) -> Result<ClassificationResult> {
    if query.embedder_id() != space.embedder_id() {
        return Err(Error::Config(format!(
            "video {video_id} embedded by {}, space built with {}",
            query.embedder_id(),
            space.embedder_id()
        )));
    }
    // class -> (best similarity, its prototype index, sum, count)
    let mut stats: BTreeMap<&str, (f64, usize, f64, usize)> = BTreeMap::new();
    for e in space.entries() {
        let sim = cosine_slices(query.values(), e.vector.values()).with_context(|| format!("video {video_id}"))?;
        let s = stats
            .entry(e.class_label.as_str())
            .or_insert((f64::NEG_INFINITY, e.prototype_index, 0.0, 0));
        if sim > s.0 {
            s.0 = sim;
            s.1 = e.prototype_index;
        }
        s.2 += sim;
        s.3 += 1;
    }
    let per_class_best: BTreeMap<String, f64> = stats
        .iter()
        .map(|(c, s)| {
            let score = match aggregation {
                Aggregation::Max => s.0,
                Aggregation::Mean => s.2 / s.3 as f64,
            };
            (c.to_string(), score)
        })
        .collect();
    let mut best: Option<(&String, f64)> = None;
    for (c, &score) in &per_class_best {
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((c, score));
        }
    }
    let (predicted, best_similarity) = best.expect("space is non-empty");
    Ok(ClassificationResult {
        video_id: video_id.to_string(),
        predicted: predicted.clone(),
        best_similarity,
        nearest_prototype_index: stats[predicted.as_str()].1,
        per_class_best,
    })
}

/// Vector for one video under the chosen representation.
pub fn video_embedding(
    fused: &FusedDescription,
    provider: &dyn EmbeddingProvider,
    representation: VideoRepresentation,
) -> Result<EmbeddingVector> {
    match representation {
        VideoRepresentation::Fused => embed(&fused.sentence, provider),
        VideoRepresentation::ObserverMean => {
            let mut acc = vec![0.0; provider.dim()];
            for (obs, s) in &fused.parts {
                let v = embed(s, provider).with_context(|| format!("observer {obs}"))?;
                let n = v.norm();
                if n == 0.0 {
                    return Err(Error::ZeroNorm(format!("observer {obs} sentence embeds to zero")));
                }
                if v.dim() != acc.len() {
                    return Err(Error::Dimension(format!(
                        "provider returned {}-dim vector, declared {}",
                        v.dim(),
                        acc.len()
                    )));
                }
                acc.iter_mut().zip(v.values()).for_each(|(a, x)| *a += x / n);
            }
            let k = fused.parts.len().max(1) as f64;
            EmbeddingVector::new(acc.into_iter().map(|a| a / k).collect(), provider.id())
        }
    }
}

/// Nearest-prototype class of one fused description.
pub fn classify(
    fused: &FusedDescription,
    space: &JointSpace,
    provider: &dyn EmbeddingProvider,
) -> Result<ClassificationResult> {
    classify_with(fused, space, provider, ClassifyOptions::default())
}

pub fn classify_with(
    fused: &FusedDescription,
    space: &JointSpace,
    provider: &dyn EmbeddingProvider,
    options: ClassifyOptions,
) -> Result<ClassificationResult> {
    if provider.id() != space.embedder_id() {
        return Err(Error::Config(format!(
            "provider {} does not match space embedder {}",
            provider.id(),
            space.embedder_id()
        )));
    }
    let query = video_embedding(fused, provider, options.representation)
        .with_context(|| format!("video {}", fused.video_id))?;
    classify_vector(&fused.video_id, &query, space, options.aggregation)
}

/// [`classify_with`] over many videos in parallel; output order follows input.
pub fn batch_classify(
    fused: &[FusedDescription],
    space: &JointSpace,
    provider: &dyn EmbeddingProvider,
    options: ClassifyOptions,
) -> Result<Vec<ClassificationResult>> {
    fused
        .par_iter()
        .map(|f| classify_with(f, space, provider, options))
        .collect()
}

pub fn write_results(path: &Path, results: &[ClassificationResult]) -> Result<()> {
    write_jsonl(path, results)
}

pub fn read_results(path: &Path) -> Result<Vec<ClassificationResult>> {
    read_jsonl(path)
}

/// Counts by (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[true][predicted]`
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn count(&self, truth: &str, predicted: &str) -> usize {
        match (self.index(truth), self.index(predicted)) {
            (Some(t), Some(p)) => self.counts[t][p],
            _ => 0,
        }
    }

    pub fn row_sum(&self, row: usize) -> usize {
        self.counts[row].iter().sum()
    }

    /// Diagonal over row sum; `None` for classes with no videos.
    pub fn per_class_accuracy(&self) -> BTreeMap<String, Option<f64>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let n = self.row_sum(i);
                (l.clone(), (n > 0).then(|| self.counts[i][i] as f64 / n as f64))
            })
            .collect()
    }

    /// Sub-matrix over `labels` in the given order (e.g. grouped classes).
    pub fn reorder<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        let idx = labels
            .iter()
            .map(|l| {
                self.index(l.as_ref())
                    .ok_or_else(|| Error::Data(format!("class {} not in confusion matrix", l.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            labels: labels.iter().map(|l| l.as_ref().to_string()).collect(),
            counts: idx
                .iter()
                .map(|&r| idx.iter().map(|&c| self.counts[r][c]).collect())
                .collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(results: &[ClassificationResult], truth: &BTreeMap<String, String>) -> Result<ConfusionMatrix> {
    let mut labels: BTreeSet<String> = truth.values().cloned().collect();
    labels.extend(results.iter().map(|r| r.predicted.clone()));
    let labels: Vec<String> = labels.into_iter().collect();
    let mut m = ConfusionMatrix {
        counts: vec![vec![0; labels.len()]; labels.len()],
        labels,
    };
    for r in results {
        let t = truth
            .get(&r.video_id)
            .ok_or_else(|| Error::Data(format!("no ground truth for video {}", r.video_id)))?;
        let (ti, pi) = (
            m.index(t).expect("label set"),
            m.index(&r.predicted).expect("label set"),
        );
        m.counts[ti][pi] += 1;
    }
    Ok(m)
}
