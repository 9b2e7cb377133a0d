use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fuse::verdict_of;
use super::FusionError;
use crate::data::Label;

/// Fraction of predictions equal to their label.
pub fn accuracy(predicted: &[Label], labels: &[Label]) -> Result<f64, FusionError> {
    if predicted.len() != labels.len() {
        return Err(FusionError::LengthMismatch(predicted.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(FusionError::Empty);
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Non-interpolated average precision with fake as the positive class.
///
/// Samples are ranked by descending `p_fake`; equal scores keep their input
/// order.
pub fn average_precision(p_fakes: &[f64], labels: &[Label]) -> Result<f64, FusionError> {
    if p_fakes.len() != labels.len() {
        return Err(FusionError::LengthMismatch(p_fakes.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(FusionError::Empty);
    }
    if let Some(&bad) = p_fakes.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(FusionError::BadScore(bad));
    }
    let positives = labels.iter().filter(|&&l| l == Label::Fake).count();
    if positives == 0 {
        return Err(FusionError::NoPositives);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| p_fakes[b].total_cmp(&p_fakes[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] == Label::Fake {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Input row for a metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub source: String,
    pub p_fake: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub n: usize,
    pub accuracy: f64,
    /// Absent when the source has no fake samples.
    pub average_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub average_precision: f64,
    pub per_source: BTreeMap<String, SourceMetrics>,
}

impl MetricsReport {
    pub fn compute(samples: &[ScoredSample]) -> Result<Self, FusionError> {
        let (n, acc, ap) = score(samples)?;
        let ap = ap.ok_or(FusionError::NoPositives)?;
        let mut groups: BTreeMap<String, Vec<ScoredSample>> = BTreeMap::new();
        for s in samples {
            groups.entry(s.source.clone()).or_default().push(s.clone());
        }
        let per_source = groups
            .into_iter()
            .map(|(k, v)| {
                let (n, accuracy, average_precision) = score(&v)?;
                Ok((k, SourceMetrics { n, accuracy, average_precision }))
            })
            .collect::<Result<_, FusionError>>()?;
        Ok(Self { n, accuracy: acc, average_precision: ap, per_source })
    }
}

fn score(samples: &[ScoredSample]) -> Result<(usize, f64, Option<f64>), FusionError> {
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let p: Vec<f64> = samples.iter().map(|s| s.p_fake).collect();
    let verdicts: Vec<Label> = p.iter().map(|&x| verdict_of(x)).collect();
    let acc = accuracy(&verdicts, &labels)?;
    let ap = match average_precision(&p, &labels) {
        Ok(v) => Some(v),
        Err(FusionError::NoPositives) => None,
        Err(e) => return Err(e),
    };
    Ok((samples.len(), acc, ap))
}
