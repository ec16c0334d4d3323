//! Core of the entail-probe harness.
//!
//! Everything in this crate is pure computation over in-memory values: the
//! directional-inference data model and its text format, the controlled
//! dataset transformations, the relative-frequency heuristic, prompt
//! rendering and answer parsing, the biased response simulator and the
//! scoring/analysis routines. File IO, network backends, caching and the
//! command line live in the `entail-probe` crate.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod dataset;
pub mod entity_index;
pub mod format;
pub mod freq;
pub mod lemma;
pub mod prompt;
pub mod response;
pub mod rng;
pub mod simulate;
pub mod transforms;
pub mod types;

pub use dataset::{Direction, Label, NliSample, TaskVariant, ValidationReport, ValidationWarning};
pub use entity_index::{Band, EntityIndex, EntityIndexRecord};
pub use freq::{FrequencyClass, FrequencyVerdict, NgramStore, YearRange};
pub use response::{ModelResponse, ParsedChoice, PromptKind, Veracity};
pub use rng::{KeyedRng, Seed};
pub use types::{ArgumentSlot, EntityType, Proposition, Slot, TypeSet};
