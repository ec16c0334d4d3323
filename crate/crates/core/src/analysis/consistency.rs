use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::score::ScoredPrediction;
use crate::dataset::Label;
use crate::freq::FrequencyClass;
use crate::response::Veracity;

/// Where the veracity of each hypothesis comes from.
#[derive(Debug, Clone, Copy)]
pub enum VSource<'a> {
    /// The `v` field of each prediction.
    SelfReported,
    /// A majority table keyed by rendered hypothesis.
    Majority(&'a BTreeMap<String, Veracity>),
}

/// Sample ids of the four subsets, each in prediction order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencySubsets {
    pub v_consistent: Vec<String>,
    pub v_adversarial: Vec<String>,
    pub f_consistent: Vec<String>,
    pub f_adversarial: Vec<String>,
}

impl ConsistencySubsets {
    pub const NAMES: [&'static str; 4] = ["V_C", "V_A", "F_C", "F_A"];

    pub fn by_name(&self) -> [(&'static str, &[String]); 4] {
        [
            ("V_C", &self.v_consistent),
            ("V_A", &self.v_adversarial),
            ("F_C", &self.f_consistent),
            ("F_A", &self.f_adversarial),
        ]
    }

    /// The predictions whose ids are in `ids`, in prediction order.
    pub fn members(preds: &[ScoredPrediction], ids: &[String]) -> Vec<ScoredPrediction> {
        let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        preds
            .iter()
            .filter(|p| set.contains(p.sample_id.as_str()))
            .cloned()
            .collect()
    }
}

/// Splits predictions by agreement of V and F with the gold label.
///
/// A sample is V-consistent when `G = Entail` and `V = True`, or when
/// `G = NoEntail` and `V ≠ True`; every other sample with a V value is
/// V-adversarial. F-consistent pairs Entail with Win and NoEntail with Lose,
/// F-adversarial the reverse; Draw and missing F are in neither.
pub fn consistency_split(preds: &[ScoredPrediction], source: VSource<'_>) -> ConsistencySubsets {
    let mut out = ConsistencySubsets::default();
    for p in preds {
        let v = match source {
            VSource::SelfReported => p.v,
            VSource::Majority(table) => table.get(&p.hypothesis).copied(),
        };
        if let Some(v) = v {
            let consistent = v.is_true() == (p.gold == Label::Entail);
            let dest = if consistent {
                &mut out.v_consistent
            } else {
                &mut out.v_adversarial
            };
            dest.push(p.sample_id.clone());
        }
        match (p.f, p.gold) {
            (Some(FrequencyClass::Win), Label::Entail) | (Some(FrequencyClass::Lose), Label::NoEntail) => {
                out.f_consistent.push(p.sample_id.clone())
            }
            (Some(FrequencyClass::Lose), Label::Entail) | (Some(FrequencyClass::Win), Label::NoEntail) => {
                out.f_adversarial.push(p.sample_id.clone())
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteError {
    TooFewBackends(usize),
    EvenBackendCount(usize),
}

impl fmt::Display for VoteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VoteError::TooFewBackends(n) => write!(f, "majority vote needs at least 3 backends, got {n}"),
            VoteError::EvenBackendCount(n) => write!(f, "majority vote needs an odd number of backends, got {n}"),
        }
    }
}

fn check_count(n: usize) -> Result<(), VoteError> {
    if n < 3 {
        Err(VoteError::TooFewBackends(n))
    } else if n.is_multiple_of(2) {
        Err(VoteError::EvenBackendCount(n))
    } else {
        Ok(())
    }
}

/// Majority over backends' judgements of one hypothesis. A missing
/// judgement votes Unknown. True or False needs a strict majority; anything
/// else is Unknown, which only matters as "not True" downstream.
pub fn majority_vote(votes: &[Option<Veracity>]) -> Result<Veracity, VoteError> {
    check_count(votes.len())?;
    let count = |v: Veracity| votes.iter().filter(|x| **x == Some(v)).count();
    let half = votes.len() / 2;
    Ok(if count(Veracity::True) > half {
        Veracity::True
    } else if count(Veracity::False) > half {
        Veracity::False
    } else {
        Veracity::Unknown
    })
}

/// Votes every hypothesis that appears in any backend's table.
pub fn majority_table(tables: &[&BTreeMap<String, Veracity>]) -> Result<BTreeMap<String, Veracity>, VoteError> {
    check_count(tables.len())?;
    let keys: BTreeSet<&String> = tables.iter().flat_map(|t| t.keys()).collect();
    let mut out = BTreeMap::new();
    for k in keys {
        let votes: Vec<Option<Veracity>> = tables.iter().map(|t| t.get(k).copied()).collect();
        out.insert(k.clone(), majority_vote(&votes)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TaskVariant;
    use crate::response::ParsedChoice;
    use crate::rng::{KeyedRng, Seed};
    use alloc::format;

    fn p(i: usize, gold: Label, v: Option<Veracity>, f: Option<FrequencyClass>) -> ScoredPrediction {
        ScoredPrediction {
            sample_id: format!("s{i}"),
            variant: TaskVariant::I,
            hypothesis: format!("h{i}"),
            choice: ParsedChoice::A,
            predicted: Label::Entail,
            s_ent: Some(1.0),
            s_tok_defaulted: false,
            v,
            f,
            gold,
        }
    }

    #[test]
    fn definitions() {
        use FrequencyClass::*;
        use Veracity::*;
        let preds = [
            p(0, Label::Entail, Some(True), Some(Win)),
            p(1, Label::NoEntail, Some(Unknown), Some(Draw)),
            p(2, Label::Entail, Some(False), Some(Lose)),
            p(3, Label::NoEntail, Some(True), Some(Win)),
            p(4, Label::NoEntail, None, Some(Lose)),
        ];
        let s = consistency_split(&preds, VSource::SelfReported);
        assert_eq!(s.v_consistent, ["s0", "s1"]);
        assert_eq!(s.v_adversarial, ["s2", "s3"]);
        assert_eq!(s.f_consistent, ["s0", "s4"]);
        assert_eq!(s.f_adversarial, ["s2", "s3"]);
    }

    #[test]
    fn partition_property() {
        let mut rng = KeyedRng::from_str_key(Seed(5), &["partition"]);
        let vs = [None, Some(Veracity::True), Some(Veracity::Unknown), Some(Veracity::False)];
        let fs = [None, Some(FrequencyClass::Win), Some(FrequencyClass::Lose), Some(FrequencyClass::Draw)];
        let preds: Vec<_> = (0..300)
            .map(|i| {
                let g = if rng.bernoulli(0.5) { Label::Entail } else { Label::NoEntail };
                p(i, g, vs[rng.below(4)], fs[rng.below(4)])
            })
            .collect();
        let s = consistency_split(&preds, VSource::SelfReported);
        let v_labeled = preds.iter().filter(|x| x.v.is_some()).count();
        assert_eq!(s.v_consistent.len() + s.v_adversarial.len(), v_labeled);
        let a: BTreeSet<_> = s.v_consistent.iter().collect();
        assert!(s.v_adversarial.iter().all(|x| !a.contains(x)));
        let f_labeled = preds
            .iter()
            .filter(|x| matches!(x.f, Some(FrequencyClass::Win | FrequencyClass::Lose)))
            .count();
        assert_eq!(s.f_consistent.len() + s.f_adversarial.len(), f_labeled);
    }

    #[test]
    fn majority_on_ten_hypotheses() {
        use Veracity::*;
        let backends: [[Veracity; 10]; 3] = [
            [True, True, False, Unknown, True, False, True, Unknown, False, True],
            [True, False, False, True, Unknown, False, True, Unknown, True, False],
            [False, True, Unknown, True, Unknown, True, False, False, True, False],
        ];
        let tables: Vec<BTreeMap<String, Veracity>> = backends
            .iter()
            .map(|b| b.iter().enumerate().map(|(i, v)| (format!("h{i}"), *v)).collect())
            .collect();
        let refs: Vec<&BTreeMap<String, Veracity>> = tables.iter().collect();
        let got = majority_table(&refs).unwrap();
        // Hand-computed column-wise majorities.
        let expected = [True, True, False, True, Unknown, False, True, Unknown, True, False];
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(got[&format!("h{i}")], *e, "h{i}");
        }

        let preds: Vec<_> = (0..10).map(|i| p(i, Label::Entail, None, None)).collect();
        let s = consistency_split(&preds, VSource::Majority(&got));
        assert_eq!(s.v_consistent, ["s0", "s1", "s3", "s6", "s8"]);
        assert_eq!(s.v_adversarial.len(), 5);
    }

    #[test]
    fn backend_count_rules() {
        let t = BTreeMap::new();
        assert_eq!(majority_table(&[&t, &t]), Err(VoteError::TooFewBackends(2)));
        assert_eq!(majority_table(&[&t, &t, &t, &t]), Err(VoteError::EvenBackendCount(4)));
        assert_eq!(majority_vote(&[None, Some(Veracity::True), Some(Veracity::True)]), Ok(Veracity::True));
    }
}
