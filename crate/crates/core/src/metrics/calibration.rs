//! Proxy-calibration metrics. The reference probabilities are the ranking
//! model's predictions, not click labels, so the metrics apply to unexposed
//! items too.

use serde::Serialize;

use crate::error::{Error, Result};

/// Default bucket count for ECE and score histograms.
pub const DEFAULT_BUCKETS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_pred: f64,
    pub mean_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub pcoc: f64,
    pub buckets: Vec<CalibrationBucket>,
}

fn check_unit(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|v| !(**v >= 0.0 && **v < 1.0)) {
        Some(v) => Err(Error::data(format!("{what} value {v} outside [0, 1)"))),
        None => Ok(()),
    }
}

fn bucket_of(p: f64, buckets: usize) -> usize {
    ((p * buckets as f64) as usize).min(buckets - 1)
}

fn check_pairs(pred: &[f64], reference: &[f64], buckets: usize) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::data(format!(
            "{} predictions vs {} reference values",
            pred.len(),
            reference.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::data("calibration over zero samples"));
    }
    if buckets == 0 {
        return Err(Error::config("evaluation.ece_buckets", "must be at least 1"));
    }
    check_unit(pred, "prediction")?;
    check_unit(reference, "reference")
}

/// `(1/D) * sum_k | sum_{i: pred_i in B_k} (ref_i - pred_i) |` with
/// `B_k = [(k-1)/K, k/K)`.
pub fn ece(pred: &[f64], reference: &[f64], buckets: usize) -> Result<f64> {
    check_pairs(pred, reference, buckets)?;
    let mut gaps = vec![0.0; buckets];
    for (&p, &r) in pred.iter().zip(reference) {
        gaps[bucket_of(p, buckets)] += r - p;
    }
    Ok(gaps.iter().map(|g| g.abs()).sum::<f64>() / pred.len() as f64)
}

/// Predicted over reference: `sum pred / sum reference`.
pub fn pcoc(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::data("pcoc: length mismatch"));
    }
    let denom: f64 = reference.iter().sum();
    if denom <= 0.0 {
        return Err(Error::data("pcoc: reference sum is zero"));
    }
    Ok(pred.iter().sum::<f64>() / denom)
}

pub fn calibration_report(pred: &[f64], reference: &[f64], buckets: usize) -> Result<CalibrationReport> {
    let ece = ece(pred, reference, buckets)?;
    let pcoc = pcoc(pred, reference)?;
    let mut sums = vec![(0usize, 0.0, 0.0); buckets];
    for (&p, &r) in pred.iter().zip(reference) {
        let b = &mut sums[bucket_of(p, buckets)];
        b.0 += 1;
        b.1 += p;
        b.2 += r;
    }
    let buckets_out = sums
        .iter()
        .enumerate()
        .map(|(i, &(count, sp, sr))| {
            let n = count.max(1) as f64;
            CalibrationBucket {
                lo: i as f64 / buckets as f64,
                hi: (i + 1) as f64 / buckets as f64,
                count,
                mean_pred: sp / n,
                mean_ref: sr / n,
            }
        })
        .collect();
    Ok(CalibrationReport {
        ece,
        pcoc,
        buckets: buckets_out,
    })
}

/// Share of values in each of `buckets` equal-width buckets over [0, 1).
/// Empty input yields all zeros.
pub fn score_histogram(values: &[f64], buckets: usize) -> Result<Vec<f64>> {
    if buckets == 0 {
        return Err(Error::config("evaluation.histogram_buckets", "must be at least 1"));
    }
    check_unit(values, "histogram")?;
    let mut counts = vec![0usize; buckets];
    for &v in values {
        counts[bucket_of(v, buckets)] += 1;
    }
    let n = values.len().max(1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Total-variation distance between two histograms, `0.5 * sum |a - b|`.
pub fn total_variation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::data("histograms have different bucket counts"));
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}
