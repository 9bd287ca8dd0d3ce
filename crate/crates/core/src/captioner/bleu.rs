//! Corpus-level Bleu.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::text::Sentence;
use crate::vocab::tokenize;

/// Corpus Bleu of orders `1..=n` with one reference per candidate.
pub fn bleu(candidates: &[Sentence], references: &[Sentence], n: usize) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Dimension(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let cand: Vec<Vec<String>> = candidates.iter().map(|s| tokenize(s.text())).collect();
    let refs: Vec<Vec<String>> = references.iter().map(|s| tokenize(s.text())).collect();
    bleu_tokens(&cand, &refs, n)
}

/// Token-level form of [`bleu`]: clipped n-gram precisions are pooled over
/// the corpus, combined by geometric mean and scaled by the brevity penalty
/// `exp(1 − r/c)` when the candidates are shorter than the references.
pub fn bleu_tokens<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>], n: usize) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("Bleu over an empty corpus".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Dimension(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if n == 0 {
        return Err(Error::Config("Bleu order must be at least 1".into()));
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (cand, reference) in candidates.iter().zip(references) {
        let cand: Vec<&str> = cand.iter().map(AsRef::as_ref).collect();
        let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
        c_len += cand.len();
        r_len += reference.len();
        for order in 1..=n {
            let ref_counts = ngram_counts(&reference, order);
            for (gram, count) in ngram_counts(&cand, order) {
                matched[order - 1] += count.min(ref_counts.get(&gram).copied().unwrap_or(0));
                total[order - 1] += count;
            }
        }
    }
    if c_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for (m, t) in matched.iter().zip(&total) {
        if *m == 0 {
            return Ok(0.0);
        }
        log_sum += (*m as f64 / *t as f64).ln();
    }
    let brevity = if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    Ok(brevity * (log_sum / n as f64).exp())
}

fn ngram_counts<'a>(tokens: &[&'a str], order: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(order) {
        *counts.entry(gram.to_vec()).or_insert(0) += 1;
    }
    counts
}
