use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::SummaryStats;
use crate::error::{Error, Result};
use crate::pipeline::{Engine, PrototypeConfig};
use crate::text::{PrototypeMode, DEFAULT_MAX_SENTENCES, DEFAULT_MIN_WORDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: String,
    pub params: BTreeMap<String, String>,
    /// Raw per-run accuracies as fractions.
    pub accuracies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<SummaryStats>,
    /// Set for cells whose run failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub sweep: String,
    pub rows: Vec<SweepRow>,
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

impl SweepTable {
    pub fn row(&self, key: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    /// Accuracy columns in percent with one decimal.
    pub fn to_csv(&self) -> String {
        let params: Vec<&String> = self.rows.first().map(|r| r.params.keys().collect()).unwrap_or_default();
        let mut out = String::from("key");
        for p in &params {
            out.push(',');
            out.push_str(p);
        }
        out.push_str(",runs,mean_pct,std_pct,ci_pct,error\n");
        for r in &self.rows {
            out.push_str(&csv_field(&r.key));
            for p in &params {
                out.push(',');
                out.push_str(&csv_field(r.params.get(*p).map_or("", String::as_str)));
            }
            let s = r.summary.as_ref();
            out.push_str(&format!(
                ",{},{},{},{},{}\n",
                r.accuracies.len(),
                s.map(|s| pct(s.mean)).unwrap_or_default(),
                s.and_then(|s| s.std).map(pct).unwrap_or_default(),
                s.and_then(|s| s.ci_half_width).map(pct).unwrap_or_default(),
                csv_field(r.error.as_deref().unwrap_or("")),
            ));
        }
        out
    }

    /// Writes `<sweep>.csv` and `<sweep>.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{}.csv", self.sweep));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(format!("{}.json", self.sweep));
        std::fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&json, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

struct Cell<K> {
    order: K,
    key: String,
    params: BTreeMap<String, String>,
}

/// Runs every cell in parallel; failed cells are kept with their error when
/// `keep_failures` is set and propagated otherwise. Rows are sorted by cell
/// order, so the table does not depend on grid order.
fn run_cells<K, F>(sweep: &str, mut cells: Vec<Cell<K>>, keep_failures: bool, run: F) -> Result<SweepTable>
where
    K: Ord + Send,
    F: Fn(&BTreeMap<String, String>) -> Result<(Vec<f64>, SummaryStats)> + Sync,
{
    cells.sort_by(|a, b| a.order.cmp(&b.order));
    cells.dedup_by(|a, b| a.order == b.order);
    let rows: Vec<Result<SweepRow>> = cells
        .into_par_iter()
        .map(|cell| match run(&cell.params) {
            Ok((accuracies, summary)) => Ok(SweepRow {
                key: cell.key,
                params: cell.params,
                accuracies,
                summary: Some(summary),
                error: None,
            }),
            Err(e) if keep_failures => Ok(SweepRow {
                key: cell.key,
                params: cell.params,
                accuracies: Vec::new(),
                summary: None,
                error: Some(e.to_string()),
            }),
            Err(e) => Err(e.context(format!("sweep {sweep} cell {}", cell.key))),
        })
        .collect();
    Ok(SweepTable {
        sweep: sweep.to_string(),
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

fn accuracies(runs: &[crate::pipeline::RunResult]) -> Vec<f64> {
    runs.iter().map(|r| r.accuracy).collect()
}

/// One row per observer subset, everything else fixed.
pub fn observer_combination_sweep(engine: &Engine, combinations: &[Vec<String>]) -> Result<SweepTable> {
    if combinations.is_empty() {
        return Err(Error::Config("no observer combinations given".into()));
    }
    let mut cells = Vec::new();
    for combo in combinations {
        let subset = engine.observers().subset(combo)?;
        let key = subset.join("+");
        cells.push(Cell {
            order: (subset.len(), key.clone()),
            key: key.clone(),
            params: BTreeMap::from([("observers".to_string(), key)]),
        });
    }
    let c = engine.config();
    run_cells("observers", cells, false, |params| {
        let subset: Vec<String> = params["observers"].split('+').map(str::to_string).collect();
        let (runs, summary) = engine.evaluate(
            &c.prototypes,
            &c.embedders.selection,
            &c.embedders.joint,
            &subset,
            c.classify,
        )?;
        Ok((accuracies(&runs), summary))
    })
}

/// Accuracy per `(min_words, max_sentences)` cell; the default cell is always
/// included and failing cells are reported rather than dropped.
pub fn prototype_param_sweep(engine: &Engine, min_words: &[usize], max_sentences: &[usize]) -> Result<SweepTable> {
    if min_words.is_empty() || max_sentences.is_empty() {
        return Err(Error::Config("prototype sweep grids must not be empty".into()));
    }
    let mut grid: Vec<(usize, usize)> = min_words
        .iter()
        .flat_map(|&m| max_sentences.iter().map(move |&s| (m, s)))
        .collect();
    grid.push((DEFAULT_MIN_WORDS, DEFAULT_MAX_SENTENCES));
    let cells = grid
        .into_iter()
        .map(|(m, s)| Cell {
            order: (m, s),
            key: format!("{m}x{s}"),
            params: BTreeMap::from([
                ("max_sentences".to_string(), s.to_string()),
                ("min_words".to_string(), m.to_string()),
            ]),
        })
        .collect();
    let c = engine.config();
    let subset = engine.active_observers()?;
    run_cells("prototypes", cells, true, |params| {
        let cfg = PrototypeConfig {
            mode: c.prototypes.mode,
            min_words: params["min_words"].parse().expect("written above"),
            max_sentences: params["max_sentences"].parse().expect("written above"),
        };
        let (runs, summary) = engine.evaluate(&cfg, &c.embedders.selection, &c.embedders.joint, &subset, c.classify)?;
        Ok((accuracies(&runs), summary))
    })
}

/// One row per prototype mode: label only, paragraph, sentences.
pub fn representation_mode_sweep(engine: &Engine) -> Result<SweepTable> {
    let modes = [
        PrototypeMode::LabelOnly,
        PrototypeMode::Paragraph,
        PrototypeMode::Sentences,
    ];
    let cells = modes
        .iter()
        .enumerate()
        .map(|(i, m)| Cell {
            order: i,
            key: m.to_string(),
            params: BTreeMap::from([("mode".to_string(), m.to_string())]),
        })
        .collect();
    let c = engine.config();
    let subset = engine.active_observers()?;
    run_cells("modes", cells, false, |params| {
        let cfg = PrototypeConfig {
            mode: params["mode"].parse()?,
            ..c.prototypes.clone()
        };
        let (runs, summary) = engine.evaluate(&cfg, &c.embedders.selection, &c.embedders.joint, &subset, c.classify)?;
        Ok((accuracies(&runs), summary))
    })
}

/// Accuracy per (selection provider, joint-space provider) pair. Providers
/// are cached by the engine, so a text is embedded at most once per spec.
pub fn embedder_sweep(engine: &Engine, selection: &[String], joint: &[String]) -> Result<SweepTable> {
    if selection.is_empty() || joint.is_empty() {
        return Err(Error::Config(
            "embedder sweep needs at least one provider per stage".into(),
        ));
    }
    let mut cells = Vec::new();
    for s in selection {
        for j in joint {
            cells.push(Cell {
                order: (s.clone(), j.clone()),
                key: format!("{s}|{j}"),
                params: BTreeMap::from([("joint".to_string(), j.clone()), ("selection".to_string(), s.clone())]),
            });
        }
    }
    let c = engine.config();
    let subset = engine.active_observers()?;
    run_cells("embedders", cells, false, |params| {
        let (runs, summary) = engine.evaluate(
            &c.prototypes,
            &params["selection"],
            &params["joint"],
            &subset,
            c.classify,
        )?;
        Ok((accuracies(&runs), summary))
    })
}
