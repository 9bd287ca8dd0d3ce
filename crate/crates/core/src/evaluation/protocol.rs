use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::validate_disjoint;
use crate::error::{Error, Result};
use crate::text::normalize_label;

const TRUZE_UCF101: &str = include_str!("../../data/truze_ucf101.txt");
const TRUZE_HMDB51: &str = include_str!("../../data/truze_hmdb51.txt");

/// TruZe test classes for `ucf101` or `hmdb51`, as written in the lists.
pub fn truze_classes(dataset: &str) -> Result<Vec<String>> {
    let raw = match dataset.to_ascii_lowercase().as_str() {
        "ucf101" => TRUZE_UCF101,
        "hmdb51" => TRUZE_HMDB51,
        other => return Err(Error::Config(format!("no TruZe list for dataset {other:?}"))),
    };
    Ok(raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Deterministic child seed from a root seed and a stage name.
pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Truze,
    ZeroFifty,
    FiftyFifty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub name: ProtocolName,
    /// Dataset whose TruZe list applies (`ucf101` or `hmdb51`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Explicit test classes; overrides the built-in TruZe list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_classes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default = "one")]
    pub n_runs: usize,
    /// Split seed; derived from the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn one() -> usize {
    1
}

impl Default for Protocol {
    /// Every class unseen, one run.
    fn default() -> Self {
        Self {
            name: ProtocolName::ZeroFifty,
            dataset: None,
            test_classes: None,
            fraction: Some(1.0),
            n_runs: 1,
            seed: None,
        }
    }
}

impl Protocol {
    pub fn truze(dataset: &str) -> Self {
        Self {
            name: ProtocolName::Truze,
            dataset: Some(dataset.to_string()),
            test_classes: None,
            fraction: None,
            n_runs: 1,
            seed: None,
        }
    }

    pub fn random(name: ProtocolName, fraction: f64, n_runs: usize, seed: u64) -> Self {
        Self {
            name,
            dataset: None,
            test_classes: None,
            fraction: Some(fraction),
            n_runs,
            seed: Some(seed),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("protocol needs at least one run".into()));
        }
        match self.name {
            ProtocolName::Truze => {
                if self.test_classes.is_none() && self.dataset.is_none() {
                    return Err(Error::Config("truze protocol needs a dataset or test_classes".into()));
                }
            }
            _ => {
                let f = self
                    .fraction
                    .ok_or_else(|| Error::Config("random protocol needs a fraction".into()))?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Config(format!("split fraction {f} outside (0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// One evaluation run's class partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub run: usize,
    pub seed: u64,
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
}

/// `n_runs` random partitions with `⌈fraction · n⌉` unseen classes each.
pub fn make_random_splits<S: AsRef<str>>(all_classes: &[S], protocol: &Protocol) -> Result<Vec<Split>> {
    if protocol.name == ProtocolName::Truze {
        return Err(Error::Config("truze uses fixed test classes, not random splits".into()));
    }
    protocol.validate()?;
    let fraction = protocol.fraction.expect("validated");
    let classes: Vec<String> = all_classes
        .iter()
        .map(|c| c.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.is_empty() {
        return Err(Error::EmptyInput("no classes to split".into()));
    }
    let k = ((fraction * classes.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let k = k.min(classes.len());
    (0..protocol.n_runs)
        .map(|run| {
            let seed = derive_seed(protocol.seed.unwrap_or(0), &format!("split{run}"));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut unseen: Vec<String> = classes.choose_multiple(&mut rng, k).cloned().collect();
            unseen.sort();
            let chosen: BTreeSet<&String> = unseen.iter().collect();
            let seen: Vec<String> = classes.iter().filter(|c| !chosen.contains(c)).cloned().collect();
            let report = validate_disjoint(&seen, &unseen);
            if !report.passed() {
                return Err(Error::Data(format!(
                    "split {run} has overlapping labels {:?}",
                    report.overlap
                )));
            }
            Ok(Split {
                run,
                seed,
                seen,
                unseen,
            })
        })
        .collect()
}

/// Splits for any protocol. TruZe maps its list onto `all_classes` by
/// normalized label; every listed class must be present.
pub fn protocol_splits<S: AsRef<str>>(all_classes: &[S], protocol: &Protocol) -> Result<Vec<Split>> {
    protocol.validate()?;
    if protocol.name != ProtocolName::Truze {
        return make_random_splits(all_classes, protocol);
    }
    let wanted = match &protocol.test_classes {
        Some(list) => list.clone(),
        None => truze_classes(protocol.dataset.as_deref().expect("validated"))?,
    };
    let mut unseen = Vec::new();
    let mut missing = Vec::new();
    for w in &wanted {
        let key = normalize_label(w);
        match all_classes.iter().find(|c| normalize_label(c.as_ref()) == key) {
            Some(c) => unseen.push(c.as_ref().to_string()),
            None => missing.push(w.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "test classes missing from the dataset: {}",
            missing.join(", ")
        )));
    }
    unseen.sort();
    unseen.dedup();
    Ok(vec![Split {
        run: 0,
        seed: protocol.seed.unwrap_or(0),
        seen: Vec::new(),
        unseen,
    }])
}
