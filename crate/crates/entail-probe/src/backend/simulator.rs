use entail_probe_core::response::PromptKind;
use entail_probe_core::simulate::{simulate_response, simulate_veracity, synthesize_veracity_table, BiasParams};
use entail_probe_core::{Proposition, Seed};

use super::{Backend, BackendError, BackendRequest, Completion};

/// Backend that answers from [`BiasParams`] without any model.
#[derive(Debug, Clone)]
pub struct SimulatorBackend {
    id: String,
    params: BiasParams,
    /// When set, hypotheses missing from the table are filled in by
    /// `prepare` with this probability of being True.
    true_rate: Option<f64>,
    table_seed: Seed,
}

impl SimulatorBackend {
    pub fn new(id: &str, params: BiasParams, true_rate: Option<f64>, table_seed: Seed) -> Self {
        SimulatorBackend {
            id: id.to_string(),
            params,
            true_rate,
            table_seed,
        }
    }

    pub fn params(&self) -> &BiasParams {
        &self.params
    }
}

impl Backend for SimulatorBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "simulator"
    }

    fn complete(&self, req: &BackendRequest) -> Result<Completion, BackendError> {
        let r = match (req.prompt.kind, &req.sample) {
            (PromptKind::Veracity, _) => simulate_veracity(&self.params, &req.hypothesis),
            (PromptKind::Inference, Some(sample)) => {
                simulate_response(&self.params, sample, req.frequency.as_ref(), PromptKind::Inference)
            }
            (PromptKind::Inference, None) => return Err(BackendError::new("simulator needs the sample for inference prompts")),
        };
        r.map(|r| Completion {
            text: r.raw_text,
            s_tok: r.s_tok,
        })
        .map_err(|e| BackendError::new(e.to_string()))
    }

    /// Simulated answers depend on the variant and sample, not only on the
    /// prompt text.
    fn cache_scope(&self, req: &BackendRequest) -> String {
        match (&req.sample, req.prompt.kind) {
            (Some(s), PromptKind::Inference) => format!("{}\u{1f}{}", s.variant.tag(), s.id),
            _ => String::new(),
        }
    }

    fn prepare(&mut self, hypotheses: &[&Proposition]) {
        let Some(rate) = self.true_rate else { return };
        let missing: Vec<&Proposition> = hypotheses
            .iter()
            .copied()
            .filter(|h| !self.params.veracity_table.contains_key(&h.render()))
            .collect();
        let extra = synthesize_veracity_table(missing, rate, self.table_seed);
        self.params.veracity_table.extend(extra);
    }
}
