//! Plain-text rendering of run reports, sweep tables and confusion matrices.

use std::path::Path;

use super::run::{RunReport, CONFUSION_FILE, REPORT_FILE};
use crate::classifier::ConfusionMatrix;
use crate::error::{Error, Result};
use crate::evaluation::{SummaryStats, SweepTable};

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn aligned(rows: &[Vec<String>], right_from: usize) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c >= right_from {
                    format!("{s:>w$}", w = widths[c])
                } else {
                    format!("{s:<w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Accuracy table in percent. With a single run per row the table has no
/// dispersion columns; otherwise cells read `mean±std` followed by `E`, the
/// confidence-interval half width.
pub fn render_summary_table(title: &str, rows: &[(String, SummaryStats)]) -> String {
    let multi = rows.iter().any(|(_, s)| s.n > 1);
    let mut table = vec![if multi {
        vec![title.to_string(), "runs".into(), "accuracy (%)".into(), "E".into()]
    } else {
        vec![title.to_string(), "accuracy (%)".into()]
    }];
    for (key, s) in rows {
        if multi {
            let cell = match s.std {
                Some(sd) => format!("{}±{}", pct(s.mean), pct(sd)),
                None => pct(s.mean),
            };
            table.push(vec![
                key.clone(),
                s.n.to_string(),
                cell,
                s.ci_half_width.map(pct).unwrap_or_else(|| "-".into()),
            ]);
        } else {
            table.push(vec![key.clone(), pct(s.mean)]);
        }
    }
    aligned(&table, 1)
}

/// Confusion matrix as an aligned grid with a trailing row-sum column.
pub fn render_confusion(matrix: &ConfusionMatrix) -> String {
    let mut table = vec![std::iter::once("truth \\ predicted".to_string())
        .chain(matrix.labels.iter().cloned())
        .chain(std::iter::once("total".to_string()))
        .collect::<Vec<_>>()];
    for (i, label) in matrix.labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(matrix.counts[i].iter().map(ToString::to_string));
        row.push(matrix.row_sum(i).to_string());
        table.push(row);
    }
    aligned(&table, 1)
}

pub fn render_sweep(table: &SweepTable) -> String {
    let ok: Vec<(String, SummaryStats)> = table
        .rows
        .iter()
        .filter_map(|r| r.summary.clone().map(|s| (r.key.clone(), s)))
        .collect();
    let mut out = format!("sweep: {}\n", table.sweep);
    out.push_str(&render_summary_table(&table.sweep, &ok));
    for r in table.rows.iter().filter(|r| r.error.is_some()) {
        out.push_str(&format!(
            "failed {}: {}\n",
            r.key,
            r.error.as_deref().unwrap_or_default()
        ));
    }
    out
}

fn parse_confusion(text: &str) -> Result<ConfusionMatrix> {
    let bad = || Error::Data(format!("malformed {CONFUSION_FILE}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(bad)?;
    let labels: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let mut counts = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let row: Vec<usize> = line
            .split(',')
            .skip(1)
            .map(|c| c.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if row.len() != labels.len() {
            return Err(bad());
        }
        counts.push(row);
    }
    if counts.len() != labels.len() {
        return Err(bad());
    }
    Ok(ConfusionMatrix { labels, counts })
}

/// Renders the report, confusion matrix and any sweep tables found in a
/// results directory.
pub fn render_report(dir: &Path) -> Result<String> {
    let report_path = dir.join(REPORT_FILE);
    let sweeps_dir = dir.join("sweeps");
    let mut out = String::new();
    let mut found = false;
    if report_path.is_file() {
        found = true;
        let text = std::fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
        let report: RunReport =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", report_path.display())))?;
        out.push_str(&format!(
            "dataset: {}\nprotocol: {:?}\nobservers: {}\nembedders: {} / {}\nprototypes: {} (min_words {}, max_sentences {})\n\n",
            report.dataset,
            report.protocol.name,
            report.observers.join(", "),
            report.embedders.selection,
            report.embedders.joint,
            report.prototypes.mode,
            report.prototypes.min_words,
            report.prototypes.max_sentences,
        ));
        out.push_str(&render_summary_table(
            "configuration",
            &[("top-1".to_string(), report.summary.clone())],
        ));
        let confusion_path = dir.join(CONFUSION_FILE);
        if confusion_path.is_file() {
            let text = std::fs::read_to_string(&confusion_path).map_err(|e| Error::io(&confusion_path, e))?;
            out.push('\n');
            out.push_str(&render_confusion(&parse_confusion(&text)?));
        }
    }
    if sweeps_dir.is_dir() {
        let mut paths: Vec<_> = std::fs::read_dir(&sweeps_dir)
            .map_err(|e| Error::io(&sweeps_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
            .collect();
        paths.sort();
        for p in paths {
            found = true;
            out.push('\n');
            out.push_str(&render_sweep(&SweepTable::load(&p)?));
        }
    }
    if !found {
        return Err(Error::Data(format!(
            "{} holds no report or sweep results",
            dir.display()
        )));
    }
    Ok(out)
}
