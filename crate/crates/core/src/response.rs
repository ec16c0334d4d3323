//! Answer choices and model responses.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// The option letter a response selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParsedChoice {
    A,
    B,
    C,
    Unparsed,
}

impl ParsedChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ParsedChoice::A => "A",
            ParsedChoice::B => "B",
            ParsedChoice::C => "C",
            ParsedChoice::Unparsed => "Unparsed",
        }
    }

    pub fn is_parsed(self) -> bool {
        self != ParsedChoice::Unparsed
    }
}

impl FromStr for ParsedChoice {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim() {
            "A" => Ok(ParsedChoice::A),
            "B" => Ok(ParsedChoice::B),
            "C" => Ok(ParsedChoice::C),
            "Unparsed" => Ok(ParsedChoice::Unparsed),
            _ => Err(()),
        }
    }
}

impl fmt::Display for ParsedChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    #[serde(rename = "inference")]
    Inference,
    #[serde(rename = "veracity")]
    Veracity,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Inference => "inference",
            PromptKind::Veracity => "veracity",
        }
    }
}

/// Hypothesis-only veracity judgement (symbol V).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Veracity {
    True,
    Unknown,
    False,
}

impl Veracity {
    /// A → True, B → Unknown, C → False.
    pub fn from_choice(c: ParsedChoice) -> Option<Veracity> {
        match c {
            ParsedChoice::A => Some(Veracity::True),
            ParsedChoice::B => Some(Veracity::Unknown),
            ParsedChoice::C => Some(Veracity::False),
            ParsedChoice::Unparsed => None,
        }
    }

    pub fn is_true(self) -> bool {
        self == Veracity::True
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Veracity::True => "True",
            Veracity::Unknown => "Unknown",
            Veracity::False => "False",
        }
    }
}

impl FromStr for Veracity {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(Veracity::True),
            "unknown" => Ok(Veracity::Unknown),
            "false" => Ok(Veracity::False),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Veracity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub raw_text: String,
    pub choice: ParsedChoice,
    /// Probability of the answer-letter token, when the backend reports it.
    pub s_tok: Option<f64>,
    pub backend_id: String,
    pub cached: bool,
}
