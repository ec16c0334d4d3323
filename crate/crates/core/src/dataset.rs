//! Directional inference samples and their structural validation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::{Proposition, Slot};

/// Gold entailment label (symbol G).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Entail,
    NoEntail,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entail => "Entail",
            Label::NoEntail => "NoEntail",
        }
    }

    pub fn is_entail(self) -> bool {
        self == Label::Entail
    }
}

impl FromStr for Label {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entail" | "true" | "1" => Ok(Label::Entail),
            "noentail" | "no-entail" | "no_entail" | "false" | "0" => Ok(Label::NoEntail),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

impl FromStr for Direction {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "forward" | "fwd" => Ok(Direction::Forward),
            "reverse" | "rev" => Ok(Direction::Reverse),
            _ => Err(()),
        }
    }
}

/// Which task a dataset instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskVariant {
    /// Original samples.
    I,
    /// Random type-constrained premise predicate.
    #[serde(rename = "I_RP")]
    RandomPremise,
    /// Arguments replaced by typed identifiers.
    #[serde(rename = "I_TA")]
    TypedArgs,
    /// Arguments replaced by infrequent same-type entities.
    #[serde(rename = "I_RA_low")]
    RandomArgsLow,
    /// Arguments replaced by frequent same-type entities.
    #[serde(rename = "I_RA_high")]
    RandomArgsHigh,
    /// Random premise followed by typed identifiers.
    #[serde(rename = "I_RP_TA")]
    RandomPremiseTypedArgs,
}

impl TaskVariant {
    pub const ALL: [TaskVariant; 6] = [
        TaskVariant::I,
        TaskVariant::RandomPremise,
        TaskVariant::TypedArgs,
        TaskVariant::RandomArgsLow,
        TaskVariant::RandomArgsHigh,
        TaskVariant::RandomPremiseTypedArgs,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            TaskVariant::I => "I",
            TaskVariant::RandomPremise => "I_RP",
            TaskVariant::TypedArgs => "I_TA",
            TaskVariant::RandomArgsLow => "I_RA_low",
            TaskVariant::RandomArgsHigh => "I_RA_high",
            TaskVariant::RandomPremiseTypedArgs => "I_RP_TA",
        }
    }

    /// Variants whose construction forces every gold label to NoEntail.
    pub fn forces_no_entail(self) -> bool {
        matches!(
            self,
            TaskVariant::RandomPremise | TaskVariant::RandomPremiseTypedArgs
        )
    }
}

impl FromStr for TaskVariant {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        TaskVariant::ALL
            .into_iter()
            .find(|v| v.tag().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

impl fmt::Display for TaskVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NliSample {
    pub id: String,
    pub pair_id: String,
    pub direction: Direction,
    pub premise: Proposition,
    pub hypothesis: Proposition,
    pub gold: Label,
    pub variant: TaskVariant,
}

impl NliSample {
    /// Argument surfaces are shared slot-by-slot between premise and hypothesis.
    pub fn shares_arguments(&self) -> bool {
        [Slot::X, Slot::Y].iter().all(|&s| {
            self.premise.arg(s).surface() == self.hypothesis.arg(s).surface()
                && self.premise.arg(s).etype() == self.hypothesis.arg(s).etype()
        })
    }
}

/// A pairing or consistency problem that does not stop loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationWarning {
    UnpairedPairId { pair_id: String },
    PairLabels { pair_id: String },
    PairNotMirrored { pair_id: String },
    ArgumentsDiffer { sample_id: String },
    UnknownType { line: usize, name: String },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::UnpairedPairId { pair_id } => {
                write!(f, "pair_id {pair_id} has only one sample")
            }
            ValidationWarning::PairLabels { pair_id } => write!(
                f,
                "pair_id {pair_id}: expected forward=Entail and reverse=NoEntail"
            ),
            ValidationWarning::PairNotMirrored { pair_id } => write!(
                f,
                "pair_id {pair_id}: reverse sample does not swap the forward premise and hypothesis"
            ),
            ValidationWarning::ArgumentsDiffer { sample_id } => write!(
                f,
                "sample {sample_id}: premise and hypothesis arguments differ"
            ),
            ValidationWarning::UnknownType { line, name } => {
                write!(f, "line {line}: unknown entity type {name:?} mapped to thing")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub count: usize,
    pub unknown_type_fallbacks: usize,
    pub warnings: Vec<ValidationWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairingError {
    DuplicateId(String),
    OverfullPair { pair_id: String, count: usize },
    SameDirection { pair_id: String },
}

impl fmt::Display for PairingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairingError::DuplicateId(id) => write!(f, "duplicate sample id {id}"),
            PairingError::OverfullPair { pair_id, count } => {
                write!(f, "pair_id {pair_id} is shared by {count} samples")
            }
            PairingError::SameDirection { pair_id } => {
                write!(f, "pair_id {pair_id} has two samples with the same direction")
            }
        }
    }
}

/// Checks ids, pairing and the per-variant label/argument contracts.
///
/// Hard failures (duplicate ids, pairs of three or more, two samples in the
/// same direction) are errors; everything else becomes a warning.
pub fn validate_samples(samples: &[NliSample]) -> Result<Vec<ValidationWarning>, PairingError> {
    let mut ids = BTreeSet::new();
    for s in samples {
        if !ids.insert(s.id.as_str()) {
            return Err(PairingError::DuplicateId(s.id.clone()));
        }
    }

    let mut pairs: BTreeMap<&str, Vec<&NliSample>> = BTreeMap::new();
    for s in samples {
        pairs.entry(s.pair_id.as_str()).or_default().push(s);
    }

    let mut warnings = Vec::new();
    for s in samples {
        if matches!(s.variant, TaskVariant::I) && !s.shares_arguments() {
            warnings.push(ValidationWarning::ArgumentsDiffer {
                sample_id: s.id.clone(),
            });
        }
    }
    for (pair_id, members) in &pairs {
        match members.as_slice() {
            [_] => warnings.push(ValidationWarning::UnpairedPairId {
                pair_id: pair_id.to_string(),
            }),
            [a, b] => {
                if a.direction == b.direction {
                    return Err(PairingError::SameDirection {
                        pair_id: pair_id.to_string(),
                    });
                }
                let (fwd, rev) = if a.direction == Direction::Forward {
                    (a, b)
                } else {
                    (b, a)
                };
                let forced = fwd.variant.forces_no_entail();
                let labels_ok = if forced {
                    fwd.gold == Label::NoEntail && rev.gold == Label::NoEntail
                } else {
                    fwd.gold == Label::Entail && rev.gold == Label::NoEntail
                };
                if !labels_ok {
                    warnings.push(ValidationWarning::PairLabels {
                        pair_id: pair_id.to_string(),
                    });
                }
                if matches!(fwd.variant, TaskVariant::I)
                    && (fwd.premise != rev.hypothesis || fwd.hypothesis != rev.premise)
                {
                    warnings.push(ValidationWarning::PairNotMirrored {
                        pair_id: pair_id.to_string(),
                    });
                }
            }
            many => {
                return Err(PairingError::OverfullPair {
                    pair_id: pair_id.to_string(),
                    count: many.len(),
                })
            }
        }
    }
    Ok(warnings)
}
