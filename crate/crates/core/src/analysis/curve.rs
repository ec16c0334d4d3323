use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::recall::hard_metrics;
use super::score::ScoredPrediction;

/// One operating point; `threshold` is `None` for the leading anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: Option<f64>,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub points: Vec<PrPoint>,
    pub auc: f64,
    /// `(auc - positive_rate) / (1 - positive_rate)`; may be negative.
    pub auc_norm: f64,
    pub below_random: bool,
    pub positive_rate: f64,
    /// Samples on the curve (parsed responses only).
    pub n: usize,
    pub excluded_unparsed: usize,
    pub s_tok_defaulted: usize,
    /// F1 of the A-vs-BC decision over all samples, unparsed as NoEntail.
    pub f1_at_decision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveError {
    DegenerateLabels { n: usize, positives: usize },
}

impl fmt::Display for CurveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveError::DegenerateLabels { n, positives } => write!(
                f,
                "degenerate labels: {positives} positive out of {n} scored samples"
            ),
        }
    }
}

/// Precision-recall curve over `s_ent` with tied scores entering together.
///
/// Thresholds are the distinct scores in descending order; at threshold `t`
/// every sample with `s_ent >= t` is predicted positive. The curve starts at
/// `(0, precision at the highest threshold)` and the area is the trapezoid
/// sum over consecutive points.
pub fn pr_curve(preds: &[ScoredPrediction]) -> Result<CurveReport, CurveError> {
    let mut scored: Vec<(f64, bool)> = preds
        .iter()
        .filter_map(|p| p.s_ent.map(|s| (s, p.gold.is_entail())))
        .collect();
    let n = scored.len();
    let positives = scored.iter().filter(|(_, g)| *g).count();
    if positives == 0 || positives == n {
        return Err(CurveError::DegenerateLabels { n, positives });
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        let t = scored[i].0;
        while i < n && scored[i].0 == t {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: Some(t),
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    points.insert(
        0,
        PrPoint {
            threshold: None,
            recall: 0.0,
            precision: points[0].precision,
        },
    );
    let auc = trapezoid(&points);
    let positive_rate = positives as f64 / n as f64;
    let auc_norm = (auc - positive_rate) / (1.0 - positive_rate);
    Ok(CurveReport {
        points,
        auc,
        auc_norm,
        below_random: auc_norm < 0.0,
        positive_rate,
        n,
        excluded_unparsed: preds.len() - n,
        s_tok_defaulted: preds.iter().filter(|p| p.s_tok_defaulted).count(),
        f1_at_decision: hard_metrics(preds).f1,
    })
}

pub(crate) fn trapezoid(points: &[PrPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * (w[1].precision + w[0].precision) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, TaskVariant};
    use crate::response::ParsedChoice;
    use crate::rng::{KeyedRng, Seed};
    use alloc::format;

    pub(crate) fn scored(scores: &[(f64, bool)]) -> Vec<ScoredPrediction> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &(s, g))| ScoredPrediction {
                sample_id: format!("s{i}"),
                variant: TaskVariant::I,
                hypothesis: format!("h{i}"),
                choice: if s >= 0.5 { ParsedChoice::A } else { ParsedChoice::B },
                predicted: if s >= 0.5 { Label::Entail } else { Label::NoEntail },
                s_ent: Some(s),
                s_tok_defaulted: false,
                v: None,
                f: None,
                gold: if g { Label::Entail } else { Label::NoEntail },
            })
            .collect()
    }

    /// Counts every threshold from scratch.
    fn oracle(scores: &[(f64, bool)]) -> (Vec<(f64, f64)>, f64) {
        let mut thresholds: Vec<f64> = scores.iter().map(|s| s.0).collect();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let pos = scores.iter().filter(|s| s.1).count();
        let mut pts = Vec::new();
        for t in thresholds {
            let tp = scores.iter().filter(|s| s.0 >= t && s.1).count();
            let fp = scores.iter().filter(|s| s.0 >= t && !s.1).count();
            pts.push((tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64));
        }
        pts.insert(0, (0.0, pts[0].1));
        let mut auc = 0.0;
        for w in pts.windows(2) {
            auc += (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0;
        }
        (pts, auc)
    }

    #[test]
    fn perfect_separation() {
        let r = pr_curve(&scored(&[(0.9, true), (0.8, true), (0.3, false), (0.1, false)])).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.auc_norm, 1.0);
        assert!(!r.below_random);
        assert_eq!(r.f1_at_decision, 1.0);
    }

    #[test]
    fn ties_enter_together() {
        let s = [(0.7, true), (0.7, false), (0.2, true), (0.2, false)];
        let r = pr_curve(&scored(&s)).unwrap();
        assert_eq!(r.points.len(), 3);
        assert_eq!(r.points[1].precision, 0.5);
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.auc_norm, 0.0);
    }

    #[test]
    fn degenerate_and_unparsed() {
        assert!(matches!(
            pr_curve(&scored(&[(0.9, true), (0.1, true)])),
            Err(CurveError::DegenerateLabels { n: 2, positives: 2 })
        ));
        let mut preds = scored(&[(0.9, true), (0.1, false)]);
        let mut extra = preds[0].clone();
        extra.s_ent = None;
        extra.choice = ParsedChoice::Unparsed;
        extra.predicted = Label::NoEntail;
        preds.push(extra);
        let r = pr_curve(&preds).unwrap();
        assert_eq!((r.n, r.excluded_unparsed), (2, 1));
        // One of two gold positives missed at the decision: P = 1, R = 1/2.
        assert!((r.f1_at_decision - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_random_eight_sample_sets() {
        for trial in 0..200u64 {
            let mut rng = KeyedRng::from_str_key(Seed(trial), &["curve-oracle"]);
            let s: Vec<(f64, bool)> = (0..8)
                .map(|_| (rng.below(5) as f64 / 4.0, rng.bernoulli(0.5)))
                .collect();
            let pos = s.iter().filter(|x| x.1).count();
            if pos == 0 || pos == 8 {
                continue;
            }
            let r = pr_curve(&scored(&s)).unwrap();
            let (pts, auc) = oracle(&s);
            let got: Vec<(f64, f64)> = r.points.iter().map(|p| (p.recall, p.precision)).collect();
            assert_eq!(got, pts);
            assert_eq!(r.auc, auc);
        }
    }
}
