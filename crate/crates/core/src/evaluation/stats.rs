use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::classifier::ClassificationResult;
use crate::error::{Error, Result};

/// Fraction of results whose prediction matches the ground truth.
pub fn accuracy(results: &[ClassificationResult], truth: &BTreeMap<String, String>) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput("accuracy over no results".into()));
    }
    let mut correct = 0;
    for r in results {
        let t = truth
            .get(&r.video_id)
            .ok_or_else(|| Error::Data(format!("no ground truth for video {}", r.video_id)))?;
        if *t == r.predicted {
            correct += 1;
        }
    }
    Ok(correct as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Sample standard deviation; absent for a single run.
    pub std: Option<f64>,
    pub n: usize,
    /// Half-width of the t-based confidence interval; absent for a single run.
    pub ci_half_width: Option<f64>,
    pub confidence: f64,
}

/// Two-sided Student t quantile: `P(|T| ≤ t) = confidence` with `df`
/// degrees of freedom.
pub fn t_quantile(confidence: f64, df: usize) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config(format!("confidence {confidence} outside (0, 1)")));
    }
    if df == 0 {
        return Err(Error::Config("t quantile needs at least one degree of freedom".into()));
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - (1.0 - confidence) / 2.0))
}

/// Mean, sample std (n − 1 denominator) and `E = t · s / √n`.
pub fn summarize(values: &[f64], confidence: f64) -> Result<SummaryStats> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyInput("summary of no runs".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite run value {v}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(SummaryStats {
            mean,
            std: None,
            n,
            ci_half_width: None,
            confidence,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let e = if std == 0.0 {
        0.0
    } else {
        t_quantile(confidence, n - 1)? * std / (n as f64).sqrt()
    };
    Ok(SummaryStats {
        mean,
        std: Some(std),
        n,
        ci_half_width: Some(e),
        confidence,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput("correlation needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numeric("correlation is undefined for a constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation of each named score series with the accuracy series.
pub fn score_accuracy_correlation(
    scores: &BTreeMap<String, Vec<f64>>,
    accuracies: &[f64],
) -> Result<BTreeMap<String, f64>> {
    scores
        .iter()
        .map(|(name, series)| {
            if series.len() != accuracies.len() {
                return Err(Error::Dimension(format!(
                    "{name} has {} epochs, accuracies have {}",
                    series.len(),
                    accuracies.len()
                )));
            }
            Ok((name.clone(), pearson_correlation(series, accuracies)?))
        })
        .collect()
}
