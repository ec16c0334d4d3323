use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::score::ScoredPrediction;
use crate::dataset::{Label, TaskVariant};
use crate::freq::FrequencyClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioner {
    Veracity,
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRow {
    pub variant: TaskVariant,
    pub condition: String,
    pub count: usize,
    pub entail_count: usize,
    /// `None` when the cell is empty.
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub conditioner: Conditioner,
    pub rows: Vec<ConditionalRow>,
}

impl ConditionalTable {
    pub fn get(&self, variant: TaskVariant, condition: &str) -> Option<&ConditionalRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.condition == condition)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConditionalError {
    NoConditionerValues(Conditioner),
}

impl fmt::Display for ConditionalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionalError::NoConditionerValues(c) => {
                write!(f, "no prediction carries a {c:?} annotation")
            }
        }
    }
}

pub const V_TRUE: &str = "V=True";
pub const V_OTHER: &str = "V!=True";
pub const F_WIN: &str = "F=Win";
pub const F_LOSE: &str = "F=Lose";

/// Returns the condition index, or `None` when the sample is outside the
/// conditioned population (no V, or F missing or Draw).
fn cell(p: &ScoredPrediction, c: Conditioner) -> Option<usize> {
    match c {
        Conditioner::Veracity => p.v.map(|v| if v.is_true() { 0 } else { 1 }),
        Conditioner::Frequency => match p.f? {
            FrequencyClass::Win => Some(0),
            FrequencyClass::Lose => Some(1),
            FrequencyClass::Draw => None,
        },
    }
}

/// P(predicted = Entail | condition) per variant. Variants appear in their
/// canonical order; each gets both condition rows even if empty.
pub fn conditional_table(preds: &[ScoredPrediction], conditioner: Conditioner) -> Result<ConditionalTable, ConditionalError> {
    let labels = match conditioner {
        Conditioner::Veracity => [V_TRUE, V_OTHER],
        Conditioner::Frequency => [F_WIN, F_LOSE],
    };
    let present = match conditioner {
        Conditioner::Veracity => preds.iter().any(|p| p.v.is_some()),
        Conditioner::Frequency => preds.iter().any(|p| p.f.is_some()),
    };
    if !present {
        return Err(ConditionalError::NoConditionerValues(conditioner));
    }
    let mut rows = Vec::new();
    for variant in TaskVariant::ALL {
        if !preds.iter().any(|p| p.variant == variant) {
            continue;
        }
        let mut counts = [(0usize, 0usize); 2];
        for p in preds.iter().filter(|p| p.variant == variant) {
            if let Some(i) = cell(p, conditioner) {
                counts[i].0 += 1;
                if p.predicted == Label::Entail {
                    counts[i].1 += 1;
                }
            }
        }
        for (label, (count, entail)) in labels.iter().zip(counts) {
            rows.push(ConditionalRow {
                variant,
                condition: String::from(*label),
                count,
                entail_count: entail,
                probability: (count > 0).then(|| entail as f64 / count as f64),
            });
        }
    }
    Ok(ConditionalTable { conditioner, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::{ParsedChoice, Veracity};
    use alloc::format;

    fn pred(i: usize, predicted: Label, v: Option<Veracity>, f: Option<FrequencyClass>) -> ScoredPrediction {
        ScoredPrediction {
            sample_id: format!("s{i}"),
            variant: TaskVariant::RandomPremise,
            hypothesis: format!("h{i}"),
            choice: if predicted == Label::Entail { ParsedChoice::A } else { ParsedChoice::B },
            predicted,
            s_ent: Some(if predicted == Label::Entail { 1.0 } else { 0.0 }),
            s_tok_defaulted: false,
            v,
            f,
            gold: Label::NoEntail,
        }
    }

    fn fixture() -> Vec<ScoredPrediction> {
        use FrequencyClass::*;
        use Label::*;
        use Veracity::*;
        alloc::vec![
            pred(0, Entail, Some(True), Some(Win)),
            pred(1, NoEntail, Some(True), Some(Lose)),
            pred(2, Entail, Some(True), Some(Draw)),
            pred(3, NoEntail, Some(False), Some(Win)),
            pred(4, Entail, Some(Unknown), Some(Win)),
            pred(5, NoEntail, None, None),
        ]
    }

    #[test]
    fn six_prediction_fixture_matches_brute_force() {
        let preds = fixture();
        let t = conditional_table(&preds, Conditioner::Veracity).unwrap();
        // Hand counts: V=True {0,1,2} with 2 Entail; V!=True {3,4} with 1.
        let vt = t.get(TaskVariant::RandomPremise, V_TRUE).unwrap();
        assert_eq!((vt.count, vt.entail_count), (3, 2));
        assert_eq!(vt.probability, Some(2.0 / 3.0));
        let vo = t.get(TaskVariant::RandomPremise, V_OTHER).unwrap();
        assert_eq!((vo.count, vo.probability), (2, Some(0.5)));

        let t = conditional_table(&preds, Conditioner::Frequency).unwrap();
        let win = t.get(TaskVariant::RandomPremise, F_WIN).unwrap();
        assert_eq!((win.count, win.entail_count), (3, 2));
        let lose = t.get(TaskVariant::RandomPremise, F_LOSE).unwrap();
        assert_eq!((lose.count, lose.probability), (1, Some(0.0)));

        // Sum of count * P equals the Entail predictions in the population.
        let total: f64 = t.rows.iter().map(|r| r.count as f64 * r.probability.unwrap_or(0.0)).sum();
        let direct = preds
            .iter()
            .filter(|p| matches!(p.f, Some(FrequencyClass::Win | FrequencyClass::Lose)) && p.predicted == Label::Entail)
            .count();
        assert!((total - direct as f64).abs() < 1e-9);
    }

    #[test]
    fn all_entail_and_empty_cells() {
        let preds: Vec<_> = (0..4)
            .map(|i| pred(i, Label::Entail, Some(Veracity::True), None))
            .collect();
        let t = conditional_table(&preds, Conditioner::Veracity).unwrap();
        assert_eq!(t.get(TaskVariant::RandomPremise, V_TRUE).unwrap().probability, Some(1.0));
        let empty = t.get(TaskVariant::RandomPremise, V_OTHER).unwrap();
        assert_eq!((empty.count, empty.probability), (0, None));
        assert_eq!(
            conditional_table(&preds, Conditioner::Frequency),
            Err(ConditionalError::NoConditionerValues(Conditioner::Frequency))
        );
    }
}
