use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Visual,
    Audio,
    Semantic,
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual" => Ok(Self::Visual),
            "audio" => Ok(Self::Audio),
            "semantic" => Ok(Self::Semantic),
            other => Err(Error::Data(format!("unknown modality {other:?}"))),
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Visual => "visual",
            Self::Audio => "audio",
            Self::Semantic => "semantic",
        })
    }
}

/// One feature vector per frame stack of a video, in temporal order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStack {
    video_id: String,
    modality: Modality,
    features: Matrix,
    /// Frames per stack, when the extractor reported it.
    stack_length: Option<usize>,
}

impl FeatureStack {
    pub fn new(video_id: impl Into<String>, modality: Modality, features: Matrix) -> Result<Self> {
        let video_id = video_id.into();
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::EmptyInput(format!(
                "feature stack for {video_id} has no vectors"
            )));
        }
        if !features.all_finite() {
            return Err(Error::Numeric(format!(
                "feature stack for {video_id} has non-finite entries"
            )));
        }
        Ok(Self {
            video_id,
            modality,
            features,
            stack_length: None,
        })
    }

    pub fn with_stack_length(mut self, frames: usize) -> Self {
        self.stack_length = Some(frames);
        self
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn n_c(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn stack_length(&self) -> Option<usize> {
        self.stack_length
    }

    /// Header `#<video_id> <dim> <n_c> <modality> [stack=<frames>]`, then
    /// `n_c` lines of space-separated floats.
    pub fn to_text(&self) -> String {
        let mut out = format!("#{} {} {} {}", self.video_id, self.dim(), self.n_c(), self.modality);
        if let Some(frames) = self.stack_length {
            write!(out, " stack={frames}").expect("write to string");
        }
        out.push('\n');
        for r in 0..self.n_c() {
            let row: Vec<String> = self.features.row(r).iter().map(f64::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty feature file".into()))?;
        let fields: Vec<&str> = header
            .strip_prefix('#')
            .ok_or_else(|| err(1, "header must start with '#'".into()))?
            .split_whitespace()
            .collect();
        if fields.len() < 4 {
            return Err(err(1, "expected `#video_id dim n_c modality`".into()));
        }
        let dim: usize = fields[1].parse().map_err(|_| err(1, "bad dim".into()))?;
        let n_c: usize = fields[2].parse().map_err(|_| err(1, "bad n_c".into()))?;
        let modality: Modality = fields[3].parse().map_err(|e: Error| err(1, e.to_string()))?;
        let stack_length = fields[4..]
            .iter()
            .find_map(|f| f.strip_prefix("stack="))
            .map(|v| v.parse::<usize>().map_err(|_| err(1, "bad stack length".into())))
            .transpose()?;

        let mut data = Vec::with_capacity(dim * n_c);
        let mut rows = 0;
        for (i, line) in lines {
            let values = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(i + 1, e.to_string()))?;
            if values.len() != dim {
                return Err(Error::Dimension(format!(
                    "{}:{}: expected {dim} values, found {}",
                    path.display(),
                    i + 1,
                    values.len()
                )));
            }
            data.extend(values);
            rows += 1;
        }
        if rows != n_c {
            return Err(err(1, format!("header says {n_c} vectors, file has {rows}")));
        }
        let mut stack = Self::new(fields[0], modality, Matrix::from_vec(n_c, dim, data)?)?;
        stack.stack_length = stack_length;
        Ok(stack)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Feature input for one video: a visual stream and, for bi-modal
/// models, an audio or semantic stream.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub visual: FeatureStack,
    pub asm: Option<FeatureStack>,
}

impl VideoFeatures {
    pub fn visual(visual: FeatureStack) -> Self {
        Self { visual, asm: None }
    }

    pub fn bimodal(visual: FeatureStack, asm: FeatureStack) -> Self {
        Self { visual, asm: Some(asm) }
    }

    pub fn video_id(&self) -> &str {
        self.visual.video_id()
    }
}

/// `<dir>/<video_id>.<modality>.feat`
pub fn feature_path(dir: &Path, video_id: &str, modality: Modality) -> PathBuf {
    dir.join(format!("{video_id}.{modality}.feat"))
}

/// Loads the visual stack and, if `asm` names a modality, the second stream.
pub fn load_video_features(dir: &Path, video_id: &str, asm: Option<Modality>) -> Result<VideoFeatures> {
    let visual = FeatureStack::load(&feature_path(dir, video_id, Modality::Visual))?;
    let asm = asm
        .map(|m| FeatureStack::load(&feature_path(dir, video_id, m)))
        .transpose()?;
    Ok(VideoFeatures { visual, asm })
}

/// Video ids with a visual feature file in `dir`, sorted.
pub fn list_feature_videos(dir: &Path) -> Result<Vec<String>> {
    let suffix = format!(".{}.feat", Modality::Visual);
    let mut ids: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(&suffix))
                .map(str::to_string)
        })
        .collect();
    ids.sort();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let m = Matrix::from_rows(&[vec![0.1, -2.5], vec![3.0, 1e-7]]).unwrap();
        let stack = FeatureStack::new("v1", Modality::Audio, m)
            .unwrap()
            .with_stack_length(16);
        let text = stack.to_text();
        assert!(text.starts_with("#v1 2 2 audio stack=16\n"));
        assert_eq!(FeatureStack::parse(&text, Path::new("x")).unwrap(), stack);
    }

    #[test]
    fn rejects_malformed() {
        let p = Path::new("f");
        assert!(FeatureStack::parse("#v 2 1 visual\n1 2 3\n", p).is_err());
        assert!(FeatureStack::parse("#v 2 2 visual\n1 2\n", p).is_err());
        assert!(FeatureStack::parse("v 2 1 visual\n1 2\n", p).is_err());
        assert!(FeatureStack::parse("#v 2 1 smell\n1 2\n", p).is_err());
        assert!(FeatureStack::new("v", Modality::Visual, Matrix::zeros(0, 3)).is_err());
    }
}
