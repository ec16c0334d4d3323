//! Deterministic biased responder.
//!
//! The simulator answers entailment prompts by flipping a keyed coin whose
//! bias depends on the hypothesis veracity (looked up in a table), on the
//! frequency class of the predicate pair, or on a mix of both. Veracity
//! prompts return the table entry directly. It lets the whole pipeline run
//! without a model and checks that the analysis recovers injected rates.
//!
//! Per inference sample the stream keyed `(seed, "inference", variant, id)`
//! yields, in order: one Bernoulli draw for the choice and three uniforms
//! `u1, u2, u3`. The answer-token probability is
//! `s_tok = 0.5 + 0.5 * max(u1, u2, u3)`, whose density `3 (2s - 1)^2 * 2`
//! on `[0.5, 1]` peaks at 1, i.e. the simulated model is usually confident
//! in whatever it emitted.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::NliSample;
use crate::freq::{FrequencyClass, FrequencyVerdict};
use crate::prompt::parse_answer;
use crate::response::{ModelResponse, PromptKind, Veracity};
use crate::rng::{KeyedRng, Seed};
use crate::types::Proposition;

pub const SIMULATOR_BACKEND_ID: &str = "simulator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    #[default]
    VeracityOnly,
    FrequencyOnly,
    Mixed,
}

impl BiasMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasMode::VeracityOnly => "veracity_only",
            BiasMode::FrequencyOnly => "frequency_only",
            BiasMode::Mixed => "mixed",
        }
    }

    fn needs_veracity(self) -> bool {
        self != BiasMode::FrequencyOnly
    }

    fn needs_frequency(self) -> bool {
        self != BiasMode::VeracityOnly
    }
}

impl core::str::FromStr for BiasMode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim() {
            "veracity_only" => Ok(BiasMode::VeracityOnly),
            "frequency_only" => Ok(BiasMode::FrequencyOnly),
            "mixed" => Ok(BiasMode::Mixed),
            _ => Err(()),
        }
    }
}

/// Parameters of the simulated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    pub p_entail_given_vtrue: f64,
    pub p_entail_given_vother: f64,
    pub p_entail_given_fwin: f64,
    pub p_entail_given_flose: f64,
    pub mode: BiasMode,
    /// Weight of the veracity channel in `Mixed` mode; the frequency channel
    /// gets `1 - mix_weight`.
    pub mix_weight: f64,
    /// Rendered hypothesis → veracity.
    pub veracity_table: BTreeMap<String, Veracity>,
    pub seed: Seed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    ProbabilityOutOfRange { field: &'static str, value: f64 },
    MissingVeracity { hypothesis: String },
    MissingFrequency { sample_id: String },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::ProbabilityOutOfRange { field, value } => {
                write!(f, "simulator parameter {field} = {value} is not in [0, 1]")
            }
            SimError::MissingVeracity { hypothesis } => {
                write!(f, "veracity table has no entry for hypothesis {hypothesis:?}")
            }
            SimError::MissingFrequency { sample_id } => {
                write!(f, "sample {sample_id} has no frequency verdict")
            }
        }
    }
}

impl BiasParams {
    /// Veracity-only parameters with an empty table.
    pub fn veracity_only(p_vtrue: f64, p_vother: f64, seed: Seed) -> Self {
        BiasParams {
            p_entail_given_vtrue: p_vtrue,
            p_entail_given_vother: p_vother,
            p_entail_given_fwin: 0.5,
            p_entail_given_flose: 0.5,
            mode: BiasMode::VeracityOnly,
            mix_weight: 1.0,
            veracity_table: BTreeMap::new(),
            seed,
        }
    }

    pub fn frequency_only(p_fwin: f64, p_flose: f64, seed: Seed) -> Self {
        BiasParams {
            p_entail_given_vtrue: 0.5,
            p_entail_given_vother: 0.5,
            p_entail_given_fwin: p_fwin,
            p_entail_given_flose: p_flose,
            mode: BiasMode::FrequencyOnly,
            mix_weight: 0.0,
            veracity_table: BTreeMap::new(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("p_entail_given_vtrue", self.p_entail_given_vtrue),
            ("p_entail_given_vother", self.p_entail_given_vother),
            ("p_entail_given_fwin", self.p_entail_given_fwin),
            ("p_entail_given_flose", self.p_entail_given_flose),
            ("mix_weight", self.mix_weight),
        ];
        for (field, value) in fields {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimError::ProbabilityOutOfRange { field, value });
            }
        }
        Ok(())
    }

    pub fn veracity_of(&self, hypothesis: &Proposition) -> Result<Veracity, SimError> {
        let key = hypothesis.render();
        self.veracity_table
            .get(&key)
            .copied()
            .ok_or(SimError::MissingVeracity { hypothesis: key })
    }

    /// Probability of emitting A for one inference sample.
    pub fn entail_probability(
        &self,
        sample: &NliSample,
        f: Option<&FrequencyVerdict>,
    ) -> Result<f64, SimError> {
        let p_v = if self.mode.needs_veracity() {
            match self.veracity_of(&sample.hypothesis)? {
                Veracity::True => self.p_entail_given_vtrue,
                _ => self.p_entail_given_vother,
            }
        } else {
            0.0
        };
        let p_f = if self.mode.needs_frequency() {
            let f = f.ok_or_else(|| SimError::MissingFrequency {
                sample_id: sample.id.clone(),
            })?;
            match f.class {
                FrequencyClass::Win => self.p_entail_given_fwin,
                FrequencyClass::Lose => self.p_entail_given_flose,
                FrequencyClass::Draw => 0.5 * (self.p_entail_given_fwin + self.p_entail_given_flose),
            }
        } else {
            0.0
        };
        Ok(match self.mode {
            BiasMode::VeracityOnly => p_v,
            BiasMode::FrequencyOnly => p_f,
            BiasMode::Mixed => self.mix_weight * p_v + (1.0 - self.mix_weight) * p_f,
        })
    }
}

fn response(raw: &str, kind: PromptKind, s_tok: Option<f64>) -> ModelResponse {
    ModelResponse {
        raw_text: raw.to_string(),
        choice: parse_answer(raw, kind),
        s_tok,
        backend_id: SIMULATOR_BACKEND_ID.to_string(),
        cached: false,
    }
}

/// Hypothesis-only answer: the table entry, with `s_tok = 1`.
pub fn simulate_veracity(params: &BiasParams, hypothesis: &Proposition) -> Result<ModelResponse, SimError> {
    let raw = match params.veracity_of(hypothesis)? {
        Veracity::True => "A) True.",
        Veracity::Unknown => "B) Unknown.",
        Veracity::False => "C) False.",
    };
    Ok(response(raw, PromptKind::Veracity, Some(1.0)))
}

pub fn simulate_response(
    params: &BiasParams,
    sample: &NliSample,
    f: Option<&FrequencyVerdict>,
    kind: PromptKind,
) -> Result<ModelResponse, SimError> {
    params.validate()?;
    if kind == PromptKind::Veracity {
        return simulate_veracity(params, &sample.hypothesis);
    }
    let p = params.entail_probability(sample, f)?;
    let mut rng = KeyedRng::from_str_key(params.seed, &["inference", sample.variant.tag(), &sample.id]);
    let entail = rng.bernoulli(p);
    let u = rng.next_f64().max(rng.next_f64()).max(rng.next_f64());
    let s_tok = 0.5 + 0.5 * u;
    let raw = if entail { "A) Entailment." } else { "B) Neutral." };
    Ok(response(raw, PromptKind::Inference, Some(s_tok)))
}

/// Builds a veracity table in which each hypothesis is True with probability
/// `true_rate` and otherwise Unknown or False with equal odds. Entries are
/// keyed by the rendered hypothesis and drawn from `(seed, "veracity_table",
/// hypothesis)`, so the table does not depend on the order of `hypotheses`.
pub fn synthesize_veracity_table<'a, I>(hypotheses: I, true_rate: f64, seed: Seed) -> BTreeMap<String, Veracity>
where
    I: IntoIterator<Item = &'a Proposition>,
{
    let mut table = BTreeMap::new();
    for h in hypotheses {
        let key = h.render();
        if table.contains_key(&key) {
            continue;
        }
        let mut rng = KeyedRng::from_str_key(seed, &["veracity_table", &key]);
        let v = if rng.bernoulli(true_rate) {
            Veracity::True
        } else if rng.bernoulli(0.5) {
            Veracity::Unknown
        } else {
            Veracity::False
        };
        table.insert(key, v);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::{bush_pair, four_rows};
    use crate::dataset::TaskVariant;
    use crate::response::ParsedChoice;
    use alloc::vec::Vec;

    fn table_for(samples: &[NliSample], v: Veracity) -> BTreeMap<String, Veracity> {
        samples.iter().map(|s| (s.hypothesis.render(), v)).collect()
    }

    #[test]
    fn degenerate_probabilities() {
        let rows = four_rows();
        let mut params = BiasParams::veracity_only(1.0, 0.0, Seed(3));
        params.veracity_table = table_for(&rows, Veracity::True);
        for s in &rows {
            let r = simulate_response(&params, s, None, PromptKind::Inference).unwrap();
            assert_eq!(r.choice, ParsedChoice::A);
            let s_tok = r.s_tok.unwrap();
            assert!((0.5..=1.0).contains(&s_tok));
        }
        params.veracity_table = table_for(&rows, Veracity::False);
        for s in &rows {
            let r = simulate_response(&params, s, None, PromptKind::Inference).unwrap();
            assert_eq!(r.choice, ParsedChoice::B);
        }
    }

    #[test]
    fn veracity_kind_returns_table() {
        let rows = four_rows();
        let mut params = BiasParams::veracity_only(0.5, 0.5, Seed(1));
        params.veracity_table = table_for(&rows, Veracity::False);
        let r = simulate_response(&params, &rows[0], None, PromptKind::Veracity).unwrap();
        assert_eq!(r.choice, ParsedChoice::C);
        assert_eq!(r.raw_text, "C) False.");
    }

    #[test]
    fn missing_entries_are_errors() {
        let rows = bush_pair();
        let params = BiasParams::veracity_only(0.5, 0.5, Seed(1));
        let err = simulate_response(&params, &rows[0], None, PromptKind::Inference).unwrap_err();
        assert!(matches!(err, SimError::MissingVeracity { .. }));
        let params = BiasParams::frequency_only(0.5, 0.5, Seed(1));
        let err = simulate_response(&params, &rows[0], None, PromptKind::Inference).unwrap_err();
        assert!(matches!(err, SimError::MissingFrequency { .. }));
        let mut bad = BiasParams::veracity_only(1.5, 0.5, Seed(1));
        bad.veracity_table = table_for(&rows, Veracity::True);
        assert!(matches!(
            simulate_response(&bad, &rows[0], None, PromptKind::Inference),
            Err(SimError::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn draw_uses_channel_mean_and_mixed_is_convex() {
        let rows = bush_pair();
        let mut params = BiasParams::frequency_only(0.3, 0.1, Seed(0));
        let draw = FrequencyVerdict::from_frequencies(1.0, 1.0);
        assert_eq!(draw.class, FrequencyClass::Draw);
        let p = params.entail_probability(&rows[0], Some(&draw)).unwrap();
        assert!((p - 0.2).abs() < 1e-12);
        params.mode = BiasMode::Mixed;
        params.mix_weight = 0.25;
        params.p_entail_given_vtrue = 0.9;
        params.veracity_table = table_for(&rows, Veracity::True);
        let win = FrequencyVerdict::from_frequencies(1.0, 10.0);
        let p = params.entail_probability(&rows[0], Some(&win)).unwrap();
        assert!((p - (0.25 * 0.9 + 0.75 * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn order_independent() {
        let mut rows = four_rows();
        let mut params = BiasParams::veracity_only(0.5, 0.5, Seed(9));
        params.veracity_table = table_for(&rows, Veracity::True);
        let run = |rows: &[NliSample]| -> BTreeMap<String, ModelResponse> {
            rows.iter()
                .map(|s| (s.id.clone(), simulate_response(&params, s, None, PromptKind::Inference).unwrap()))
                .collect()
        };
        let a = run(&rows);
        rows.reverse();
        assert_eq!(a, run(&rows));
    }

    #[test]
    fn variant_changes_stream() {
        let rows = four_rows();
        let mut params = BiasParams::veracity_only(0.5, 0.5, Seed(9));
        params.veracity_table = table_for(&rows, Veracity::True);
        let toks: Vec<f64> = [TaskVariant::I, TaskVariant::TypedArgs]
            .iter()
            .map(|&v| {
                let mut s = rows[0].clone();
                s.variant = v;
                simulate_response(&params, &s, None, PromptKind::Inference).unwrap().s_tok.unwrap()
            })
            .collect();
        assert_ne!(toks[0], toks[1]);
    }

    #[test]
    fn synthesized_table_rate() {
        use crate::dataset::fixtures::prop;
        use alloc::format;
        let hyps: Vec<Proposition> = (0..4000)
            .map(|i| prop("{X} likes {Y}", &format!("e{i}"), "person", "oak", "thing"))
            .collect();
        let table = synthesize_veracity_table(&hyps, 0.5, Seed(4));
        assert_eq!(table.len(), 4000);
        let t = table.values().filter(|v| v.is_true()).count() as f64 / 4000.0;
        // 3 sigma at n = 4000 is about 0.024.
        assert!((t - 0.5).abs() < 0.024, "{t}");
        let mut rev = hyps.clone();
        rev.reverse();
        assert_eq!(table, synthesize_veracity_table(&rev, 0.5, Seed(4)));
    }
}
