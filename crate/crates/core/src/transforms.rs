//! Controlled dataset transformations.
//!
//! All transformations are pure: outputs depend only on the inputs and the
//! seed, and every random draw comes from a [`KeyedRng`] stream keyed by the
//! sample or pair it affects, so output order follows input order and no
//! draw depends on how many samples came before it.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, NliSample, TaskVariant};
use crate::entity_index::{Band, EntityIndex};
use crate::rng::{KeyedRng, Seed};
use crate::types::{EntityType, Proposition, Slot};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypeSignature {
    pub x_type: EntityType,
    pub y_type: EntityType,
}

impl TypeSignature {
    pub fn of(p: &Proposition) -> Self {
        TypeSignature {
            x_type: p.arg_x().etype().clone(),
            y_type: p.arg_y().etype().clone(),
        }
    }
}

impl fmt::Display for TypeSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x_type, self.y_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub template: String,
    pub lemma_hint: Option<String>,
}

/// Candidate premise templates grouped by argument type signature.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicatePool {
    by_signature: BTreeMap<TypeSignature, Vec<PoolEntry>>,
}

impl PredicatePool {
    /// Harvests the premise of every sample, keyed by its signature and
    /// deduplicated by template string in first-seen order.
    pub fn from_samples(samples: &[NliSample]) -> Self {
        let mut pool = PredicatePool::default();
        for s in samples {
            pool.insert(
                TypeSignature::of(&s.premise),
                s.premise.template(),
                s.premise.lemma_hint(),
            );
        }
        pool
    }

    pub fn insert(&mut self, sig: TypeSignature, template: &str, hint: Option<&str>) {
        let list = self.by_signature.entry(sig).or_default();
        if !list.iter().any(|e| e.template == template) {
            list.push(PoolEntry {
                template: template.to_string(),
                lemma_hint: hint.map(str::to_string),
            });
        }
    }

    pub fn candidates(&self, sig: &TypeSignature) -> &[PoolEntry] {
        self.by_signature.get(sig).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn signatures(&self) -> impl Iterator<Item = &TypeSignature> {
        self.by_signature.keys()
    }

    pub fn total_templates(&self) -> usize {
        self.by_signature.values().map(Vec::len).sum()
    }
}

/// Why a sample was left out of a transformed dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    /// No pooled template with this signature differs from the original.
    NoPremiseCandidate { signature: TypeSignature },
    /// The entity band pool for this type is empty.
    EmptyBandPool { etype: EntityType, band: Band },
    /// The sample could not be rebuilt (only reachable with malformed pools).
    Invalid { message: String },
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::NoPremiseCandidate { signature } => {
                write!(f, "no_premise_candidate {signature}")
            }
            ExclusionReason::EmptyBandPool { etype, band } => {
                write!(f, "empty_band_pool {etype} {}", band.as_str())
            }
            ExclusionReason::Invalid { message } => write!(f, "invalid {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub sample_id: String,
    pub variant: TaskVariant,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformOutput {
    pub samples: Vec<NliSample>,
    pub exclusions: Vec<Exclusion>,
}

/// Replaces each premise predicate with a random same-signature template.
///
/// Candidates whose template string equals the original are skipped. Every
/// output is labelled NoEntail.
pub fn transform_random_premise(samples: &[NliSample], pool: &PredicatePool, seed: Seed) -> TransformOutput {
    let variant = TaskVariant::RandomPremise;
    let mut out = TransformOutput::default();
    for s in samples {
        let sig = TypeSignature::of(&s.premise);
        let candidates: Vec<&PoolEntry> = pool
            .candidates(&sig)
            .iter()
            .filter(|e| e.template != s.premise.template())
            .collect();
        if candidates.is_empty() {
            out.exclusions.push(Exclusion {
                sample_id: s.id.clone(),
                variant,
                reason: ExclusionReason::NoPremiseCandidate { signature: sig },
            });
            continue;
        }
        let mut rng = KeyedRng::from_str_key(seed, &["random_premise", &s.id]);
        let pick = candidates[rng.below(candidates.len())];
        match s.premise.with_template(&pick.template, pick.lemma_hint.as_deref()) {
            Ok(premise) => out.samples.push(NliSample {
                premise,
                gold: Label::NoEntail,
                variant,
                ..s.clone()
            }),
            Err(e) => out.exclusions.push(Exclusion {
                sample_id: s.id.clone(),
                variant,
                reason: ExclusionReason::Invalid {
                    message: e.to_string(),
                },
            }),
        }
    }
    out
}

/// `"<etype> <slot>"`, e.g. `location X`.
pub fn typed_identifier(etype: &EntityType, slot: Slot) -> String {
    alloc::format!("{} {}", etype, slot.as_str())
}

fn type_prop(p: &Proposition) -> Proposition {
    let x = typed_identifier(p.arg_x().etype(), Slot::X);
    let y = typed_identifier(p.arg_y().etype(), Slot::Y);
    p.with_surfaces(&x, &y)
        .expect("typed identifiers are non-empty single-line strings")
}

fn type_sample(s: &NliSample, variant: TaskVariant) -> NliSample {
    NliSample {
        premise: type_prop(&s.premise),
        hypothesis: type_prop(&s.hypothesis),
        variant,
        ..s.clone()
    }
}

/// Replaces every argument surface with its typed identifier. Gold labels
/// are unchanged. Total on valid input.
pub fn transform_type_args(samples: &[NliSample]) -> Vec<NliSample> {
    samples
        .iter()
        .map(|s| type_sample(s, TaskVariant::TypedArgs))
        .collect()
}

/// `transform_type_args ∘ transform_random_premise`, tagged `I_RP_TA`.
pub fn compose_rp_ta(samples: &[NliSample], pool: &PredicatePool, seed: Seed) -> TransformOutput {
    let rp = transform_random_premise(samples, pool, seed);
    TransformOutput {
        samples: rp
            .samples
            .iter()
            .map(|s| type_sample(s, TaskVariant::RandomPremiseTypedArgs))
            .collect(),
        exclusions: rp
            .exclusions
            .into_iter()
            .map(|e| Exclusion {
                variant: TaskVariant::RandomPremiseTypedArgs,
                ..e
            })
            .collect(),
    }
}

type EntityKey = (String, EntityType);

fn entities(s: &NliSample) -> [EntityKey; 4] {
    let k = |p: &Proposition, slot| {
        let a = p.arg(slot);
        (a.surface().to_string(), a.etype().clone())
    };
    [
        k(&s.premise, Slot::X),
        k(&s.premise, Slot::Y),
        k(&s.hypothesis, Slot::X),
        k(&s.hypothesis, Slot::Y),
    ]
}

/// Draws a replacement for one original entity. The stream is keyed by pair
/// id and the original entity, so both directions of a pair agree.
fn draw_replacement(index: &EntityIndex, band: Band, seed: Seed, pair_id: &str, key: &EntityKey) -> Option<String> {
    let pool = index.band_pool(&key.1, band);
    if pool.is_empty() {
        return None;
    }
    let mut rng = KeyedRng::from_str_key(
        seed,
        &["random_args", band.as_str(), pair_id, key.1.as_str(), &key.0],
    );
    let mut pick = &pool[rng.below(pool.len())];
    if pick.surface == key.0 {
        pick = &pool[rng.below(pool.len())];
    }
    Some(pick.surface.clone())
}

/// Replaces each entity with a random same-type entity from a frequency band.
///
/// One mapping is computed per pair id over all entities appearing in its
/// samples, then applied to every member. Gold labels are unchanged. A pair
/// member with an entity whose band pool is empty is excluded.
pub fn transform_random_args(samples: &[NliSample], index: &EntityIndex, band: Band, seed: Seed) -> TransformOutput {
    let variant = match band {
        Band::Low5 => TaskVariant::RandomArgsLow,
        Band::High5 => TaskVariant::RandomArgsHigh,
    };

    // Mappings are fixed per pair before any sample is rewritten.
    let mut mappings: BTreeMap<&str, BTreeMap<EntityKey, Option<String>>> = BTreeMap::new();
    for s in samples {
        let map = mappings.entry(s.pair_id.as_str()).or_default();
        for key in entities(s) {
            if let alloc::collections::btree_map::Entry::Vacant(slot) = map.entry(key) {
                let r = draw_replacement(index, band, seed, &s.pair_id, slot.key());
                slot.insert(r);
            }
        }
    }

    let mut out = TransformOutput::default();
    for s in samples {
        let map = &mappings[s.pair_id.as_str()];
        let [px, py, hx, hy] = entities(s);
        let lookup = |k: &EntityKey| map[k].clone().ok_or_else(|| k.1.clone());
        let rewritten = (|| -> Result<Result<NliSample, String>, EntityType> {
            let (px, py, hx, hy) = (lookup(&px)?, lookup(&py)?, lookup(&hx)?, lookup(&hy)?);
            let premise = s.premise.with_surfaces(&px, &py);
            let hypothesis = s.hypothesis.with_surfaces(&hx, &hy);
            Ok(match (premise, hypothesis) {
                (Ok(premise), Ok(hypothesis)) => Ok(NliSample {
                    premise,
                    hypothesis,
                    variant,
                    ..s.clone()
                }),
                (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
            })
        })();
        match rewritten {
            Ok(Ok(sample)) => out.samples.push(sample),
            Ok(Err(message)) => out.exclusions.push(Exclusion {
                sample_id: s.id.clone(),
                variant,
                reason: ExclusionReason::Invalid { message },
            }),
            Err(etype) => out.exclusions.push(Exclusion {
                sample_id: s.id.clone(),
                variant,
                reason: ExclusionReason::EmptyBandPool { etype, band },
            }),
        }
    }
    out
}
