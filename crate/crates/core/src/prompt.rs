//! Prompt rendering and answer parsing.
//!
//! Inference prompts insert the premise and hypothesis into one of four
//! sentence templates and append the A/B/C option block. Veracity prompts
//! present the hypothesis alone with True/Unknown/False options. Few-shot
//! examples are rendered with the same template as the query and precede it.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::NliSample;
use crate::response::{ParsedChoice, PromptKind};
use crate::types::Proposition;

pub const ZERO_SHOT_DESCRIPTION: &str = "Please check the entailments between the following statements.";
pub const IGNORE_VERACITY_DESCRIPTION: &str =
    "Please check the entailments between the following hypothetical statements. Ignore the veracity of these statements.";

pub const INFERENCE_OPTIONS: [&str; 3] = ["Entailment", "Neutral", "Contradiction"];
pub const VERACITY_OPTIONS: [&str; 3] = ["True", "Unknown", "False"];
pub const ANSWER_MARKER: &str = "Answer:";

/// One of the four sentence templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PromptTemplate(u8);

impl PromptTemplate {
    pub const ALL: [PromptTemplate; 4] = [
        PromptTemplate(1),
        PromptTemplate(2),
        PromptTemplate(3),
        PromptTemplate(4),
    ];

    pub fn new(id: u8) -> Option<Self> {
        (1..=4).contains(&id).then_some(PromptTemplate(id))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// Pattern with `{P}` and `{H}` slots.
    pub fn pattern(self) -> &'static str {
        match self.0 {
            1 => "If {P}, then {H}.",
            2 => "{P}, so {H}.",
            3 => "{P} entails {H}.",
            _ => "{P}, which means that {H}.",
        }
    }

    pub fn apply(self, premise: &str, hypothesis: &str) -> String {
        let pat = self.pattern();
        let p = pat.find("{P}").expect("pattern has {P}");
        let h = pat.find("{H}").expect("pattern has {H}");
        debug_assert!(p < h);
        let mut out = String::with_capacity(pat.len() + premise.len() + hypothesis.len());
        out.push_str(&pat[..p]);
        out.push_str(premise);
        out.push_str(&pat[p + 3..h]);
        out.push_str(hypothesis);
        out.push_str(&pat[h + 3..]);
        out
    }
}

impl TryFrom<u8> for PromptTemplate {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        PromptTemplate::new(v).ok_or_else(|| alloc::format!("template id {v} is not in 1..=4"))
    }
}

impl From<PromptTemplate> for u8 {
    fn from(t: PromptTemplate) -> u8 {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceShot {
    pub premise: String,
    pub hypothesis: String,
    pub answer: ParsedChoice,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VeracityShot {
    pub statement: String,
    pub answer: ParsedChoice,
    pub explanation: String,
}

/// Ordered in-context examples for inference prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotBlock {
    pub examples: Vec<InferenceShot>,
}

/// Ordered in-context examples for veracity prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VeracityShots {
    pub examples: Vec<VeracityShot>,
}

fn shot(p: &str, h: &str, a: ParsedChoice, e: &str) -> InferenceShot {
    InferenceShot {
        premise: p.to_string(),
        hypothesis: h.to_string(),
        answer: a,
        explanation: e.to_string(),
    }
}

impl Default for FewShotBlock {
    /// The four hand-written examples with explanations.
    fn default() -> Self {
        use ParsedChoice::{A, B};
        FewShotBlock {
            examples: alloc::vec![
                shot("Google bought Youtube", "Google owns Youtube", A, "Owning is a consequence of buying."),
                shot(
                    "Google owns Youtube",
                    "Google bought Youtube",
                    B,
                    "Owning does not imply buying, the ownership may come from other means.",
                ),
                shot(
                    "John went to the mall",
                    "John drove to the mall",
                    B,
                    "John may have gone to the mall by other means.",
                ),
                shot(
                    "John drove to the mall",
                    "John went to the mall",
                    A,
                    "Driving is a means of going to the mall.",
                ),
            ],
        }
    }
}

impl Default for VeracityShots {
    fn default() -> Self {
        let v = |s: &str, a| VeracityShot {
            statement: s.to_string(),
            answer: a,
            explanation: String::new(),
        };
        VeracityShots {
            examples: alloc::vec![
                v("Google bought Youtube", ParsedChoice::A),
                v("Yoshua Bengio likes oak trees", ParsedChoice::B),
                v("The sun rises from the west", ParsedChoice::C),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotsError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ShotsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn parse_letter(line: usize, s: &str) -> Result<ParsedChoice, ShotsError> {
    match s.trim() {
        "A" | "a" => Ok(ParsedChoice::A),
        "B" | "b" => Ok(ParsedChoice::B),
        "C" | "c" => Ok(ParsedChoice::C),
        other => Err(ShotsError {
            line,
            message: alloc::format!("answer {other:?} is not A, B or C"),
        }),
    }
}

fn shot_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(n, l)| (n, l.split('\t').collect()))
}

impl FewShotBlock {
    /// Tab-separated rows `premise, hypothesis, answer, explanation`;
    /// `#` lines are comments.
    pub fn parse_tsv(text: &str) -> Result<Self, ShotsError> {
        let mut examples = Vec::new();
        for (line, f) in shot_rows(text) {
            if f.len() != 3 && f.len() != 4 {
                return Err(ShotsError {
                    line,
                    message: alloc::format!("expected 3 or 4 columns, found {}", f.len()),
                });
            }
            examples.push(shot(f[0].trim(), f[1].trim(), parse_letter(line, f[2])?, f.get(3).map_or("", |e| e.trim())));
        }
        Ok(FewShotBlock { examples })
    }
}

impl VeracityShots {
    /// Tab-separated rows `statement, answer[, explanation]`.
    pub fn parse_tsv(text: &str) -> Result<Self, ShotsError> {
        let mut examples = Vec::new();
        for (line, f) in shot_rows(text) {
            if f.len() != 2 && f.len() != 3 {
                return Err(ShotsError {
                    line,
                    message: alloc::format!("expected 2 or 3 columns, found {}", f.len()),
                });
            }
            examples.push(VeracityShot {
                statement: f[0].trim().to_string(),
                answer: parse_letter(line, f[1])?,
                explanation: f.get(2).map_or("", |e| e.trim()).to_string(),
            });
        }
        Ok(VeracityShots { examples })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub kind: PromptKind,
    pub sample_id: String,
    /// Zero for veracity prompts.
    pub template_id: u8,
    pub shots: usize,
    pub instructed_ignore_veracity: bool,
}

fn option_block(out: &mut String, options: &[&str; 3]) {
    for (letter, word) in ["A", "B", "C"].iter().zip(options) {
        let _ = writeln!(out, "{letter}) {word}");
    }
}

fn answer_line(out: &mut String, choice: ParsedChoice, options: &[&str; 3], explanation: &str) {
    let word = match choice {
        ParsedChoice::A => options[0],
        ParsedChoice::B => options[1],
        _ => options[2],
    };
    let _ = write!(out, "{ANSWER_MARKER} {}) {word}.", choice.as_str());
    if !explanation.is_empty() {
        out.push(' ');
        out.push_str(explanation);
    }
    out.push('\n');
}

/// Appends a period unless the text already ends a sentence.
pub fn as_statement(text: &str) -> String {
    let t = text.trim_end();
    if t.ends_with(['.', '!', '?']) {
        t.to_string()
    } else {
        alloc::format!("{t}.")
    }
}

/// Renders an entailment query; `shots = None` is zero-shot.
pub fn render_inference_prompt(
    sample: &NliSample,
    template: PromptTemplate,
    shots: Option<&FewShotBlock>,
    ignore_veracity_instruction: bool,
) -> RenderedPrompt {
    let mut text = String::new();
    if ignore_veracity_instruction {
        text.push_str(IGNORE_VERACITY_DESCRIPTION);
        text.push_str("\n\n");
    } else if shots.is_none() {
        text.push_str(ZERO_SHOT_DESCRIPTION);
        text.push_str("\n\n");
    }
    if let Some(block) = shots {
        for ex in &block.examples {
            text.push_str(&template.apply(&ex.premise, &ex.hypothesis));
            text.push('\n');
            option_block(&mut text, &INFERENCE_OPTIONS);
            answer_line(&mut text, ex.answer, &INFERENCE_OPTIONS, &ex.explanation);
        }
    }
    text.push_str(&template.apply(&sample.premise.render(), &sample.hypothesis.render()));
    text.push('\n');
    option_block(&mut text, &INFERENCE_OPTIONS);
    // The zero-shot layout stops after the options; few-shot prompts end with
    // an open answer line mirroring the examples.
    if shots.is_some() {
        text.push_str(ANSWER_MARKER);
    } else {
        text.pop();
    }
    RenderedPrompt {
        text,
        kind: PromptKind::Inference,
        sample_id: sample.id.clone(),
        template_id: template.id(),
        shots: shots.map_or(0, |b| b.examples.len()),
        instructed_ignore_veracity: ignore_veracity_instruction,
    }
}

/// Renders a hypothesis-only veracity query. The prompt id is the rendered
/// hypothesis, so identical hypotheses share one prompt.
pub fn render_veracity_prompt(hypothesis: &Proposition, shots: &VeracityShots) -> RenderedPrompt {
    let mut text = String::new();
    for ex in &shots.examples {
        text.push_str(&as_statement(&ex.statement));
        text.push('\n');
        option_block(&mut text, &VERACITY_OPTIONS);
        answer_line(&mut text, ex.answer, &VERACITY_OPTIONS, &ex.explanation);
    }
    let statement = hypothesis.render();
    text.push_str(&as_statement(&statement));
    text.push('\n');
    option_block(&mut text, &VERACITY_OPTIONS);
    text.push_str(ANSWER_MARKER);
    RenderedPrompt {
        text,
        kind: PromptKind::Veracity,
        sample_id: statement,
        template_id: 0,
        shots: shots.examples.len(),
        instructed_ignore_veracity: false,
    }
}

fn rfind_ignore_case(hay: &str, needle: &str) -> Option<usize> {
    let n = needle.len();
    if hay.len() < n {
        return None;
    }
    (0..=hay.len() - n)
        .rev()
        .filter(|&i| hay.is_char_boundary(i) && hay.is_char_boundary(i + n))
        .find(|&i| hay[i..i + n].eq_ignore_ascii_case(needle))
}

/// Finds the chosen option letter in a raw completion.
///
/// Text after the last `Answer:` marker is searched if the marker is present,
/// otherwise the whole response. The first standalone A/B/C wins; lowercase
/// letters only count when followed by `)`, `.`, `:`, the end of text, or the
/// option word. Never fails: anything else is `Unparsed`.
pub fn parse_answer(raw: &str, kind: PromptKind) -> ParsedChoice {
    let options = match kind {
        PromptKind::Inference => &INFERENCE_OPTIONS,
        PromptKind::Veracity => &VERACITY_OPTIONS,
    };
    let region = match rfind_ignore_case(raw, ANSWER_MARKER) {
        Some(i) => &raw[i + ANSWER_MARKER.len()..],
        None => raw,
    };
    let bytes = region.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        let upper = b.to_ascii_uppercase();
        let choice = match upper {
            b'A' => ParsedChoice::A,
            b'B' => ParsedChoice::B,
            b'C' => ParsedChoice::C,
            _ => continue,
        };
        if i > 0 && bytes[i - 1].is_ascii_alphanumeric() {
            continue;
        }
        let next = bytes.get(i + 1).copied();
        if next.is_some_and(|c| c.is_ascii_alphanumeric()) {
            continue;
        }
        if b.is_ascii_uppercase() {
            return choice;
        }
        let rest = region[i + 1..].trim_start_matches(')').trim_start();
        let word = options[(upper - b'A') as usize];
        let followed_by_word = rest.len() >= word.len() && rest[..word.len()].eq_ignore_ascii_case(word);
        if matches!(next, None | Some(b')') | Some(b'.') | Some(b':')) || followed_by_word {
            return choice;
        }
    }
    ParsedChoice::Unparsed
}
