use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::score::ScoredPrediction;
use crate::dataset::{Label, TaskVariant};

/// Confusion counts at the A-vs-BC decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// `None` when nothing was predicted Entail.
    pub precision: Option<f64>,
    /// `None` when no gold label is Entail.
    pub recall: Option<f64>,
    /// Zero when precision or recall is undefined or both are zero.
    pub f1: f64,
}

pub fn hard_metrics(preds: &[ScoredPrediction]) -> HardMetrics {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for p in preds {
        match (p.predicted, p.gold) {
            (Label::Entail, Label::Entail) => tp += 1,
            (Label::Entail, Label::NoEntail) => fp += 1,
            (Label::NoEntail, Label::Entail) => fn_ += 1,
            (Label::NoEntail, Label::NoEntail) => tn += 1,
        }
    }
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
        _ => 0.0,
    };
    HardMetrics { tp, fp, fn_, tn, precision, recall, f1 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub variant: TaskVariant,
    pub n: usize,
    pub metrics: HardMetrics,
    /// Recall minus the recall on variant I.
    pub delta_recall: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecallError {
    MissingBaseline,
}

impl fmt::Display for RecallError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("variant I predictions are required as the recall baseline")
    }
}

/// Precision and recall per variant plus the recall change against I.
pub fn delta_recall(
    preds_by_variant: &BTreeMap<TaskVariant, Vec<ScoredPrediction>>,
) -> Result<Vec<RecallRow>, RecallError> {
    let base = preds_by_variant
        .get(&TaskVariant::I)
        .ok_or(RecallError::MissingBaseline)?;
    let base_recall = hard_metrics(base).recall;
    Ok(preds_by_variant
        .iter()
        .map(|(&variant, preds)| {
            let metrics = hard_metrics(preds);
            RecallRow {
                variant,
                n: preds.len(),
                metrics,
                delta_recall: match (metrics.recall, base_recall) {
                    (Some(r), Some(b)) => Some(r - b),
                    _ => None,
                },
            }
        })
        .collect())
}
