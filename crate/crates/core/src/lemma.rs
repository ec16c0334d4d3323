//! Rule-based predicate lemmatizer.
//!
//! A predicate is the template text with both argument placeholders removed.
//! It is lowercased, split on whitespace, stripped of edge punctuation and of
//! the context words in [`DROPPED_WORDS`]. Each remaining token is then
//! normalized as follows:
//!
//! 1. Tokens listed in [`EXCEPTIONS`] (irregular verbs and known misfires of
//!    the suffix rules) are replaced by their lemma, wherever they occur.
//! 2. Tokens listed in [`UNINFLECTED`] are left alone.
//! 3. The first token (the head) gets the full suffix rules: `-s`, `-ed`
//!    and `-ing`.
//! 4. The first token after an auxiliary (be/have/do and modals), skipping
//!    `not`, `never` and `-ly` adverbs, gets the `-ed`/`-ing` rules only.
//!
//! Suffix rules:
//!
//! * `-ies` → `-y` and `-ied` → `-y` when the word is longer than 4 letters.
//! * `-sses` → `-ss`; `-shes`, `-ches`, `-xes`, `-zzes`, `-oes` drop `-es`;
//!   words ending in `ss`, `us` or `is` keep their `s`; otherwise a final `s`
//!   is dropped from words longer than 3 letters.
//! * `-ed` / `-ing` are removed when the remaining stem has at least three
//!   letters and contains a vowel; words ending in `-eed` keep `-ed`. The
//!   stem is then repaired: a doubled final consonant other than l, s, z, f
//!   is undoubled (`stopped` → `stop`); otherwise an `e` is restored when the
//!   stem ends in one of [`E_ALWAYS`], or in one of [`E_AFTER_CONSONANT`]
//!   preceded by a consonant or nothing (`used` → `use`, `located` →
//!   `locate`, `treated` stays `treat`).
//!
//! Every token rule is iterated to a fixpoint, and roles are assigned on the
//! filtered token list, so lemmatizing a lemma returns it unchanged.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::types::Proposition;

/// Context words removed before lemmatization.
pub const DROPPED_WORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "his", "her", "its", "their", "our", "my",
    "your",
];

/// Auxiliary lemmas; the token after one gets participle rules.
pub const AUXILIARIES: &[&str] = &[
    "be", "have", "do", "will", "would", "can", "could", "may", "might", "shall", "should", "must",
];

/// Irregular forms and suffix-rule misfires, as (form, lemma).
pub const EXCEPTIONS: &[(&str, &str)] = &[
    ("am", "be"),
    ("is", "be"),
    ("are", "be"),
    ("was", "be"),
    ("were", "be"),
    ("been", "be"),
    ("being", "be"),
    ("'s", "be"),
    ("has", "have"),
    ("had", "have"),
    ("having", "have"),
    ("does", "do"),
    ("did", "do"),
    ("done", "do"),
    ("doing", "do"),
    ("goes", "go"),
    ("went", "go"),
    ("gone", "go"),
    ("going", "go"),
    ("ate", "eat"),
    ("eaten", "eat"),
    ("beat", "beat"),
    ("beaten", "beat"),
    ("became", "become"),
    ("began", "begin"),
    ("begun", "begin"),
    ("bought", "buy"),
    ("broke", "break"),
    ("broken", "break"),
    ("brought", "bring"),
    ("built", "build"),
    ("came", "come"),
    ("caught", "catch"),
    ("chose", "choose"),
    ("chosen", "choose"),
    ("dealt", "deal"),
    ("drew", "draw"),
    ("drawn", "draw"),
    ("drove", "drive"),
    ("driven", "drive"),
    ("fell", "fall"),
    ("fallen", "fall"),
    ("felt", "feel"),
    ("fought", "fight"),
    ("found", "find"),
    ("fled", "flee"),
    ("flew", "fly"),
    ("flown", "fly"),
    ("forgot", "forget"),
    ("forgotten", "forget"),
    ("froze", "freeze"),
    ("frozen", "freeze"),
    ("gave", "give"),
    ("given", "give"),
    ("got", "get"),
    ("gotten", "get"),
    ("grew", "grow"),
    ("grown", "grow"),
    ("held", "hold"),
    ("hid", "hide"),
    ("hidden", "hide"),
    ("hung", "hang"),
    ("kept", "keep"),
    ("knew", "know"),
    ("known", "know"),
    ("laid", "lay"),
    ("led", "lead"),
    ("left", "leave"),
    ("lent", "lend"),
    ("lost", "lose"),
    ("made", "make"),
    ("meant", "mean"),
    ("met", "meet"),
    ("paid", "pay"),
    ("ran", "run"),
    ("rode", "ride"),
    ("ridden", "ride"),
    ("rose", "rise"),
    ("risen", "rise"),
    ("said", "say"),
    ("sang", "sing"),
    ("sung", "sing"),
    ("sat", "sit"),
    ("saw", "see"),
    ("seen", "see"),
    ("sold", "sell"),
    ("sent", "send"),
    ("shot", "shoot"),
    ("shook", "shake"),
    ("shaken", "shake"),
    ("slept", "sleep"),
    ("spoke", "speak"),
    ("spoken", "speak"),
    ("spent", "spend"),
    ("stood", "stand"),
    ("stole", "steal"),
    ("stolen", "steal"),
    ("struck", "strike"),
    ("swore", "swear"),
    ("sworn", "swear"),
    ("took", "take"),
    ("taken", "take"),
    ("taught", "teach"),
    ("thought", "think"),
    ("threw", "throw"),
    ("thrown", "throw"),
    ("told", "tell"),
    ("understood", "understand"),
    ("woke", "wake"),
    ("won", "win"),
    ("wore", "wear"),
    ("worn", "wear"),
    ("wrote", "write"),
    ("written", "write"),
    ("died", "die"),
    ("dies", "die"),
    ("dying", "die"),
    ("lied", "lie"),
    ("lies", "lie"),
    ("lying", "lie"),
    ("tied", "tie"),
    ("ties", "tie"),
    ("tying", "tie"),
    ("used", "use"),
    ("using", "use"),
    ("owed", "owe"),
    ("owing", "owe"),
    ("added", "add"),
    ("adding", "add"),
    ("created", "create"),
    ("creating", "create"),
    ("invited", "invite"),
    ("inviting", "invite"),
    ("united", "unite"),
    ("uniting", "unite"),
    ("cited", "cite"),
    ("citing", "cite"),
    ("excited", "excite"),
    ("ignited", "ignite"),
    ("ignored", "ignore"),
    ("ignoring", "ignore"),
    ("stored", "store"),
    ("storing", "store"),
    ("scored", "score"),
    ("scoring", "score"),
    ("explored", "explore"),
    ("exploring", "explore"),
    ("restored", "restore"),
    ("restoring", "restore"),
    ("guided", "guide"),
    ("guiding", "guide"),
];

/// Words that look inflected but are base forms.
pub const UNINFLECTED: &[&str] = &[
    "bring", "sing", "string", "spring", "swing", "ring", "king", "thing", "wing", "sting",
    "during", "news", "series", "species", "always", "perhaps", "thus", "bus", "gas", "plus",
    "yes", "this", "its", "his", "hers", "across", "towards", "afterwards", "whereas", "unless",
    "besides", "bed", "red", "wed", "shed", "embed",
];

/// Stem endings after which an `e` is always restored.
pub const E_ALWAYS: &[&str] = &[
    "iat", "uat", "aus", "eas", "ais", "uir", "uad", "ang", "eng", "bl", "cl", "dl", "fl", "gl",
    "kl", "pl", "tl", "zl", "rg", "dg", "lg", "rs", "ps", "ns", "ls", "v", "c", "z",
];

/// Stem endings after which an `e` is restored when preceded by a consonant.
pub const E_AFTER_CONSONANT: &[&str] = &[
    "at", "ut", "ot", "id", "ud", "od", "ad", "ar", "ur", "ir", "us", "os", "is", "as", "ik", "ok",
    "ak", "ap", "ib", "ag", "iz", "yz", "ys",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LemmaError {
    EmptyPredicate(String),
}

impl fmt::Display for LemmaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LemmaError::EmptyPredicate(t) => write!(f, "empty predicate in {t:?}"),
        }
    }
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn has_vowel(s: &str) -> bool {
    s.bytes().any(|c| is_vowel(c) || c == b'y')
}

fn exception(word: &str) -> Option<&'static str> {
    EXCEPTIONS.iter().find(|(f, _)| *f == word).map(|(_, l)| *l)
}

fn repair_stem(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && b[n - 1] != b'y' {
        if matches!(b[n - 1], b'l' | b's' | b'z' | b'f') {
            return stem.to_string();
        }
        return stem[..n - 1].to_string();
    }
    if E_ALWAYS.iter().any(|e| stem.ends_with(e)) {
        return alloc::format!("{stem}e");
    }
    for e in E_AFTER_CONSONANT {
        if let Some(rest) = stem.strip_suffix(e) {
            let before_ok = rest
                .as_bytes()
                .last()
                .is_none_or(|&c| !is_vowel(c) && c != b'y');
            if before_ok {
                return alloc::format!("{stem}e");
            }
        }
    }
    stem.to_string()
}

fn strip_participle(word: &str) -> Option<String> {
    if word.len() > 4 {
        if let Some(stem) = word.strip_suffix("ied") {
            return Some(alloc::format!("{stem}y"));
        }
    }
    if let Some(stem) = word.strip_suffix("ed") {
        if !word.ends_with("eed") && stem.len() >= 3 && has_vowel(stem) {
            return Some(repair_stem(stem));
        }
    }
    if let Some(stem) = word.strip_suffix("ing") {
        if stem.len() >= 3 && has_vowel(stem) {
            return Some(repair_stem(stem));
        }
    }
    None
}

fn strip_plural(word: &str) -> Option<String> {
    if word.len() > 4 {
        if let Some(stem) = word.strip_suffix("ies") {
            return Some(alloc::format!("{stem}y"));
        }
    }
    if let Some(stem) = word.strip_suffix("sses") {
        return Some(alloc::format!("{stem}ss"));
    }
    for es in ["shes", "ches", "xes", "zzes", "oes"] {
        if word.ends_with(es) && word.len() > es.len() {
            return Some(word[..word.len() - 2].to_string());
        }
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return None;
    }
    if word.len() > 3 {
        return word.strip_suffix('s').map(str::to_string);
    }
    None
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Head,
    AfterAux,
    Other,
}

fn lemmatize_token(word: &str, role: Role) -> String {
    let mut cur = word.to_string();
    loop {
        let next = if let Some(l) = exception(&cur) {
            Some(l.to_string())
        } else if UNINFLECTED.contains(&cur.as_str()) {
            None
        } else {
            match role {
                Role::Head => strip_participle(&cur).or_else(|| strip_plural(&cur)),
                Role::AfterAux => strip_participle(&cur),
                Role::Other => None,
            }
        };
        match next {
            Some(n) if n != cur => cur = n,
            _ => return cur,
        }
    }
}

fn is_aux(lemma: &str) -> bool {
    AUXILIARIES.contains(&lemma)
}

fn is_skippable(tok: &str) -> bool {
    tok == "not" || tok == "never" || (tok.len() > 3 && tok.ends_with("ly"))
}

fn content_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '"' | '(' | ')'))
                .to_lowercase()
        })
        .filter(|t| !t.is_empty() && !DROPPED_WORDS.contains(&t.as_str()))
        .collect()
}

/// Lemmatizes free predicate text (placeholders must already be removed).
pub fn lemmatize_phrase(text: &str) -> String {
    let tokens = content_tokens(text);
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut pending_aux = false;
    for (i, tok) in tokens.iter().enumerate() {
        let role = if i == 0 {
            Role::Head
        } else if pending_aux && !is_skippable(tok) {
            Role::AfterAux
        } else {
            Role::Other
        };
        let lemma = lemmatize_token(tok, role);
        if is_aux(&lemma) {
            pending_aux = true;
        } else if !is_skippable(&lemma) {
            pending_aux = false;
        }
        out.push(lemma);
    }
    out.join(" ")
}

/// Content predicate of a proposition in lemma form.
///
/// A lemma hint on the proposition takes precedence over the template.
pub fn lemmatize_predicate(p: &Proposition) -> Result<String, LemmaError> {
    let lemma = match p.lemma_hint() {
        Some(h) => lemmatize_phrase(h),
        None => lemmatize_phrase(&p.predicate_text()),
    };
    if lemma.is_empty() {
        Err(LemmaError::EmptyPredicate(p.template().to_string()))
    } else {
        Ok(lemma)
    }
}

/// First lemma that is not an auxiliary or negation; falls back to the first.
pub fn head_verb(lemma: &str) -> Option<&str> {
    let mut toks = lemma.split(' ').filter(|t| !t.is_empty());
    let first = toks.clone().next()?;
    Some(
        toks.find(|t| !is_aux(t) && !is_skippable(t))
            .unwrap_or(first),
    )
}
