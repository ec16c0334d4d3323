//! Relative-frequency heuristic over an n-gram frequency store.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::lemma::{head_verb, lemmatize_predicate, LemmaError};
use crate::types::Proposition;

/// Required frequency margin between premise and hypothesis predicates.
pub const MARGIN: f64 = 5.0;

/// Inclusive year range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub first: u16,
    pub last: u16,
}

impl YearRange {
    pub const DEFAULT: YearRange = YearRange {
        first: 1950,
        last: 2019,
    };

    pub fn len(&self) -> usize {
        usize::from(self.last.saturating_sub(self.first)) + 1
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }

    pub fn contains(&self, other: &YearRange) -> bool {
        self.first <= other.first && other.last <= self.last
    }
}

impl Default for YearRange {
    fn default() -> Self {
        YearRange::DEFAULT
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.first, self.last)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FreqError {
    EmptyPhrase,
    RangeOutsideSpan { requested: YearRange, span: YearRange },
    Lemma(LemmaError),
    NegativeFrequency { phrase: String, year: u16 },
}

impl fmt::Display for FreqError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FreqError::EmptyPhrase => f.write_str("empty phrase"),
            FreqError::RangeOutsideSpan { requested, span } => {
                write!(f, "year range {requested} is outside the store span {span}")
            }
            FreqError::Lemma(e) => write!(f, "{e}"),
            FreqError::NegativeFrequency { phrase, year } => {
                write!(f, "negative frequency for {phrase:?} in {year}")
            }
        }
    }
}

impl From<LemmaError> for FreqError {
    fn from(e: LemmaError) -> Self {
        FreqError::Lemma(e)
    }
}

/// Yearly relative frequencies of lemmatized phrases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramStore {
    source: String,
    span: YearRange,
    phrases: BTreeMap<String, BTreeMap<u16, f64>>,
}

/// Lowercases and collapses whitespace; store keys use this form.
pub fn normalize_phrase(phrase: &str) -> String {
    let mut out = String::new();
    for tok in phrase.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&tok.to_lowercase());
    }
    out
}

impl NgramStore {
    pub fn new(source: &str, span: YearRange) -> Self {
        NgramStore {
            source: source.to_string(),
            span,
            phrases: BTreeMap::new(),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn span(&self) -> YearRange {
        self.span
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Sets one yearly value, replacing any previous one.
    pub fn insert(&mut self, phrase: &str, year: u16, freq: f64) -> Result<(), FreqError> {
        let key = normalize_phrase(phrase);
        if key.is_empty() {
            return Err(FreqError::EmptyPhrase);
        }
        if freq.is_nan() || freq < 0.0 {
            return Err(FreqError::NegativeFrequency { phrase: key, year });
        }
        self.phrases.entry(key).or_default().insert(year, freq);
        Ok(())
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.phrases.contains_key(&normalize_phrase(phrase))
    }

    pub fn yearly(&self, phrase: &str) -> Option<&BTreeMap<u16, f64>> {
        self.phrases.get(&normalize_phrase(phrase))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<u16, f64>)> {
        self.phrases.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Returns a copy with every frequency multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for years in out.phrases.values_mut() {
            for v in years.values_mut() {
                *v *= factor;
            }
        }
        out
    }
}

/// Mean yearly frequency over `years`; missing years count as zero and an
/// absent phrase averages to zero.
pub fn avg_frequency(store: &NgramStore, phrase: &str, years: YearRange) -> Result<f64, FreqError> {
    let key = normalize_phrase(phrase);
    if key.is_empty() {
        return Err(FreqError::EmptyPhrase);
    }
    if years.is_empty() || !store.span.contains(&years) {
        return Err(FreqError::RangeOutsideSpan {
            requested: years,
            span: store.span,
        });
    }
    let Some(yearly) = store.phrases.get(&key) else {
        return Ok(0.0);
    };
    let sum: f64 = yearly.range(years.first..=years.last).map(|(_, v)| *v).sum();
    Ok(sum / years.len() as f64)
}

/// The heuristic's verdict (symbol F).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FrequencyClass {
    Win,
    Lose,
    Draw,
}

impl FrequencyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyClass::Win => "Win",
            FrequencyClass::Lose => "Lose",
            FrequencyClass::Draw => "Draw",
        }
    }
}

impl core::str::FromStr for FrequencyClass {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "win" => Ok(FrequencyClass::Win),
            "lose" => Ok(FrequencyClass::Lose),
            "draw" => Ok(FrequencyClass::Draw),
            _ => Err(()),
        }
    }
}

impl fmt::Display for FrequencyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Win when the hypothesis is at least 5x as frequent as the premise (and
/// non-zero), Lose for the mirror case, Draw otherwise.
pub fn classify_counts(premise_freq: f64, hypothesis_freq: f64) -> FrequencyClass {
    if hypothesis_freq > 0.0 && hypothesis_freq >= MARGIN * premise_freq {
        FrequencyClass::Win
    } else if premise_freq > 0.0 && premise_freq >= MARGIN * hypothesis_freq {
        FrequencyClass::Lose
    } else {
        FrequencyClass::Draw
    }
}

/// `hypothesis / premise`; infinite when only the premise is zero and 1 when
/// both are zero.
pub fn frequency_ratio(premise_freq: f64, hypothesis_freq: f64) -> f64 {
    match (premise_freq > 0.0, hypothesis_freq > 0.0) {
        (true, _) => hypothesis_freq / premise_freq,
        (false, true) => f64::INFINITY,
        (false, false) => 1.0,
    }
}

/// How a predicate frequency was looked up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LookupPath {
    /// The full lemmatized phrase was in the store.
    Phrase,
    /// The phrase was absent and the head verb was used instead.
    HeadVerb,
    /// Neither was found; the frequency is zero.
    Missing,
}

impl LookupPath {
    pub fn as_str(self) -> &'static str {
        match self {
            LookupPath::Phrase => "phrase",
            LookupPath::HeadVerb => "head",
            LookupPath::Missing => "missing",
        }
    }
}

/// Which lookups `classify_frequency` may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LookupMode {
    /// Full phrase, falling back to the head verb when the phrase is absent.
    #[default]
    PhraseThenHead,
    PhraseOnly,
    HeadOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVerdict {
    pub class: FrequencyClass,
    pub ratio: f64,
    pub premise_freq: f64,
    pub hypothesis_freq: f64,
    pub premise_lemma: String,
    pub hypothesis_lemma: String,
    pub premise_path: LookupPath,
    pub hypothesis_path: LookupPath,
}

impl FrequencyVerdict {
    pub fn from_frequencies(premise_freq: f64, hypothesis_freq: f64) -> Self {
        FrequencyVerdict {
            class: classify_counts(premise_freq, hypothesis_freq),
            ratio: frequency_ratio(premise_freq, hypothesis_freq),
            premise_freq,
            hypothesis_freq,
            premise_lemma: String::new(),
            hypothesis_lemma: String::new(),
            premise_path: LookupPath::Phrase,
            hypothesis_path: LookupPath::Phrase,
        }
    }
}

fn lookup(store: &NgramStore, lemma: &str, years: YearRange, mode: LookupMode) -> Result<(f64, LookupPath), FreqError> {
    let head = || head_verb(lemma).unwrap_or(lemma);
    match mode {
        LookupMode::PhraseOnly => Ok(if store.contains(lemma) {
            (avg_frequency(store, lemma, years)?, LookupPath::Phrase)
        } else {
            (avg_frequency(store, lemma, years)?, LookupPath::Missing)
        }),
        LookupMode::HeadOnly => {
            let h = head();
            let path = if store.contains(h) {
                LookupPath::HeadVerb
            } else {
                LookupPath::Missing
            };
            Ok((avg_frequency(store, h, years)?, path))
        }
        LookupMode::PhraseThenHead => {
            if store.contains(lemma) {
                Ok((avg_frequency(store, lemma, years)?, LookupPath::Phrase))
            } else if store.contains(head()) {
                Ok((avg_frequency(store, head(), years)?, LookupPath::HeadVerb))
            } else {
                Ok((avg_frequency(store, lemma, years)?, LookupPath::Missing))
            }
        }
    }
}

/// Classifies a premise/hypothesis pair by the frequency of their lemmatized
/// predicates averaged over `years`.
pub fn classify_frequency(
    premise: &Proposition,
    hypothesis: &Proposition,
    store: &NgramStore,
    years: YearRange,
    mode: LookupMode,
) -> Result<FrequencyVerdict, FreqError> {
    let premise_lemma = lemmatize_predicate(premise)?;
    let hypothesis_lemma = lemmatize_predicate(hypothesis)?;
    let (premise_freq, premise_path) = lookup(store, &premise_lemma, years, mode)?;
    let (hypothesis_freq, hypothesis_path) = lookup(store, &hypothesis_lemma, years, mode)?;
    Ok(FrequencyVerdict {
        premise_lemma,
        hypothesis_lemma,
        premise_path,
        hypothesis_path,
        ..FrequencyVerdict::from_frequencies(premise_freq, hypothesis_freq)
    })
}
