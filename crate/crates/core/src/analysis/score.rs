use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, NliSample, TaskVariant};
use crate::freq::FrequencyClass;
use crate::response::{ModelResponse, ParsedChoice, Veracity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntScore {
    pub s_ent: f64,
    /// The backend gave no token probability and 1.0 was used.
    pub s_tok_defaulted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreError {
    Unparsed,
    TokenProbability(f64),
}

impl fmt::Display for ScoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreError::Unparsed => f.write_str("unparsed choice has no entailment score"),
            ScoreError::TokenProbability(p) => write!(f, "token probability {p} is not in [0, 1]"),
        }
    }
}

/// `s_ent = 0.5 + 0.5·[A]·s_tok − 0.5·[B or C]·s_tok`.
pub fn entailment_score(choice: ParsedChoice, s_tok: Option<f64>) -> Result<EntScore, ScoreError> {
    let (is_a, is_bc) = match choice {
        ParsedChoice::A => (1.0, 0.0),
        ParsedChoice::B | ParsedChoice::C => (0.0, 1.0),
        ParsedChoice::Unparsed => return Err(ScoreError::Unparsed),
    };
    let s = s_tok.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&s) {
        return Err(ScoreError::TokenProbability(s));
    }
    Ok(EntScore {
        s_ent: 0.5 + 0.5 * is_a * s - 0.5 * is_bc * s,
        s_tok_defaulted: s_tok.is_none(),
    })
}

/// One inference response turned into a label and a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub sample_id: String,
    pub variant: TaskVariant,
    /// Rendered hypothesis, used to join veracity judgements.
    pub hypothesis: String,
    pub choice: ParsedChoice,
    /// Entail iff the choice is A; unparsed responses count as NoEntail.
    pub predicted: Label,
    /// `None` for unparsed responses.
    pub s_ent: Option<f64>,
    pub s_tok_defaulted: bool,
    pub v: Option<Veracity>,
    pub f: Option<FrequencyClass>,
    pub gold: Label,
}

impl ScoredPrediction {
    /// Fails only on an out-of-range token probability.
    pub fn new(
        sample: &NliSample,
        response: &ModelResponse,
        v: Option<Veracity>,
        f: Option<FrequencyClass>,
    ) -> Result<Self, ScoreError> {
        let (s_ent, s_tok_defaulted) = match entailment_score(response.choice, response.s_tok) {
            Ok(sc) => (Some(sc.s_ent), sc.s_tok_defaulted),
            Err(ScoreError::Unparsed) => (None, false),
            Err(e) => return Err(e),
        };
        Ok(ScoredPrediction {
            sample_id: sample.id.clone(),
            variant: sample.variant,
            hypothesis: sample.hypothesis.render(),
            choice: response.choice,
            predicted: if response.choice == ParsedChoice::A {
                Label::Entail
            } else {
                Label::NoEntail
            },
            s_ent,
            s_tok_defaulted,
            v,
            f,
            gold: sample.gold,
        })
    }
}
