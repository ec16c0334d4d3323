//! The `entailprobe-v1` tab-separated text formats.
//!
//! Every file starts with the line `#format=entailprobe-v1`, followed by a
//! column header line and one record per line. Fields never contain tabs or
//! newlines, so there is no quoting. Later lines starting with `#` are
//! comments. A zero-byte file is a valid empty dataset.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use crate::dataset::{validate_samples, NliSample, PairingError, TaskVariant, ValidationReport, ValidationWarning};
use crate::types::{Proposition, TypeError, TypeSet};

pub const FORMAT_LINE: &str = "#format=entailprobe-v1";

pub const DATASET_COLUMNS: [&str; 14] = [
    "id",
    "pair_id",
    "direction",
    "prem_template",
    "prem_x_surface",
    "prem_x_type",
    "prem_y_surface",
    "prem_y_type",
    "hyp_template",
    "hyp_x_surface",
    "hyp_x_type",
    "hyp_y_surface",
    "hyp_y_type",
    "gold",
];

/// Optional trailing columns carrying predicate lemma hints.
pub const DATASET_HINT_COLUMNS: [&str; 2] = ["prem_lemma", "hyp_lemma"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatError {
    MissingFormatLine,
    UnsupportedFormat(String),
    ColumnHeader { line: usize, expected: String },
    ColumnCount { line: usize, expected: usize, found: usize },
    Field { line: usize, field: &'static str, message: String },
    DuplicateKey { line: usize, key: String, first_line: usize },
    Pairing(PairingError),
    Serialize(String),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::MissingFormatLine => {
                write!(f, "line 1: expected format header {FORMAT_LINE:?}")
            }
            FormatError::UnsupportedFormat(s) => write!(f, "line 1: unsupported format {s:?}"),
            FormatError::ColumnHeader { line, expected } => {
                write!(f, "line {line}: column header must be {expected:?}")
            }
            FormatError::ColumnCount {
                line,
                expected,
                found,
            } => write!(f, "line {line}: expected {expected} columns, found {found}"),
            FormatError::Field {
                line,
                field,
                message,
            } => write!(f, "line {line}, field {field}: {message}"),
            FormatError::DuplicateKey {
                line,
                key,
                first_line,
            } => write!(f, "line {line}: duplicate {key} (first seen on line {first_line})"),
            FormatError::Pairing(e) => write!(f, "{e}"),
            FormatError::Serialize(s) => write!(f, "cannot serialize: {s}"),
        }
    }
}

/// Splits text into numbered data lines after checking the two header lines.
/// Returns the column names and `(line_number, line)` records.
/// Column names plus `(line number, line)` for every data row.
pub(crate) type Records<'a> = (Vec<&'a str>, Vec<(usize, &'a str)>);

pub(crate) fn split_records(text: &str) -> Result<Records<'_>, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let Some((_, first)) = lines.next() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let first = first.trim();
    match first.strip_prefix("#format=") {
        None => return Err(FormatError::MissingFormatLine),
        Some("entailprobe-v1") => {}
        Some(other) => return Err(FormatError::UnsupportedFormat(other.to_string())),
    }
    let mut columns = Vec::new();
    let mut records = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if columns.is_empty() {
            columns = line.split('\t').map(str::trim).collect();
            continue;
        }
        records.push((n, line));
    }
    Ok((columns, records))
}

/// Parsed dataset plus the validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDataset {
    pub samples: Vec<NliSample>,
    pub report: ValidationReport,
}

fn field_err(line: usize, field: &'static str, e: impl fmt::Display) -> FormatError {
    FormatError::Field {
        line,
        field,
        message: e.to_string(),
    }
}

/// Parses dataset text, tagging every sample with `variant`.
///
/// Row order is preserved. Unknown entity types resolve to `thing` and are
/// counted in the report; unpaired pair ids are reported as warnings.
pub fn parse_dataset(text: &str, variant: TaskVariant, types: &TypeSet) -> Result<ParsedDataset, FormatError> {
    let (columns, records) = split_records(text)?;
    let mut report = ValidationReport::default();
    if columns.is_empty() && records.is_empty() {
        return Ok(ParsedDataset {
            samples: Vec::new(),
            report,
        });
    }
    let with_hints = columns.len() == DATASET_COLUMNS.len() + DATASET_HINT_COLUMNS.len();
    let expected: Vec<&str> = DATASET_COLUMNS
        .iter()
        .chain(if with_hints { &DATASET_HINT_COLUMNS[..] } else { &[] })
        .copied()
        .collect();
    if columns != expected {
        return Err(FormatError::ColumnHeader {
            line: 2,
            expected: DATASET_COLUMNS.join("\t"),
        });
    }

    let mut samples = Vec::with_capacity(records.len());
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (line, raw) in records {
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != expected.len() {
            return Err(FormatError::ColumnCount {
                line,
                expected: expected.len(),
                found: f.len(),
            });
        }
        let id = f[0].trim();
        if id.is_empty() {
            return Err(field_err(line, "id", "empty id"));
        }
        if let Some(&first_line) = seen.get(id) {
            return Err(FormatError::DuplicateKey {
                line,
                key: alloc::format!("id {id}"),
                first_line,
            });
        }
        seen.insert(id.to_string(), line);
        let pair_id = f[1].trim();
        if pair_id.is_empty() {
            return Err(field_err(line, "pair_id", "empty pair_id"));
        }
        let direction = f[2]
            .parse()
            .map_err(|_| field_err(line, "direction", alloc::format!("{:?} is not forward/reverse", f[2])))?;
        let mut resolve = |name: &str| {
            let (t, fell_back) = types.resolve(name);
            if fell_back {
                report.unknown_type_fallbacks += 1;
                report.warnings.push(ValidationWarning::UnknownType {
                    line,
                    name: name.trim().to_string(),
                });
            }
            t
        };
        let prem_types = (resolve(f[5]), resolve(f[7]));
        let hyp_types = (resolve(f[10]), resolve(f[12]));
        let premise = Proposition::new(f[3], f[4], prem_types.0, f[6], prem_types.1)
            .map_err(|e| prop_err(line, "prem", e))?;
        let hypothesis = Proposition::new(f[8], f[9], hyp_types.0, f[11], hyp_types.1)
            .map_err(|e| prop_err(line, "hyp", e))?;
        let gold = f[13]
            .parse()
            .map_err(|_| field_err(line, "gold", alloc::format!("{:?} is not Entail/NoEntail", f[13])))?;
        let (premise, hypothesis) = if with_hints {
            (
                premise.with_lemma_hint(Some(f[14])),
                hypothesis.with_lemma_hint(Some(f[15])),
            )
        } else {
            (premise, hypothesis)
        };
        samples.push(NliSample {
            id: id.to_string(),
            pair_id: pair_id.to_string(),
            direction,
            premise,
            hypothesis,
            gold,
            variant,
        });
    }
    report.warnings.extend(validate_samples(&samples).map_err(FormatError::Pairing)?);
    report.count = samples.len();
    Ok(ParsedDataset { samples, report })
}

fn prop_err(line: usize, side: &'static str, e: TypeError) -> FormatError {
    let field = match (&e, side) {
        (TypeError::Template { .. }, "prem") => "prem_template",
        (TypeError::Template { .. }, _) => "hyp_template",
        (_, "prem") => "prem_x_surface/prem_y_surface",
        _ => "hyp_x_surface/hyp_y_surface",
    };
    field_err(line, field, e)
}

fn clean_field<'a>(name: &str, value: &'a str) -> Result<&'a str, FormatError> {
    if value.contains(['\t', '\n', '\r']) {
        Err(FormatError::Serialize(alloc::format!(
            "{name} {value:?} contains a tab or newline"
        )))
    } else {
        Ok(value)
    }
}

/// Writes samples in the dataset format, hint columns included.
pub fn serialize_dataset(samples: &[NliSample]) -> Result<String, FormatError> {
    let mut out = String::new();
    out.push_str(FORMAT_LINE);
    out.push('\n');
    let header: Vec<&str> = DATASET_COLUMNS
        .iter()
        .chain(DATASET_HINT_COLUMNS.iter())
        .copied()
        .collect();
    out.push_str(&header.join("\t"));
    out.push('\n');
    for s in samples {
        let p = &s.premise;
        let h = &s.hypothesis;
        let fields = [
            clean_field("id", &s.id)?,
            clean_field("pair_id", &s.pair_id)?,
            s.direction.as_str(),
            p.template(),
            p.arg_x().surface(),
            p.arg_x().etype().as_str(),
            p.arg_y().surface(),
            p.arg_y().etype().as_str(),
            h.template(),
            h.arg_x().surface(),
            h.arg_x().etype().as_str(),
            h.arg_y().surface(),
            h.arg_y().etype().as_str(),
            s.gold.as_str(),
            clean_field("prem_lemma", p.lemma_hint().unwrap_or(""))?,
            clean_field("hyp_lemma", h.lemma_hint().unwrap_or(""))?,
        ];
        let _ = writeln!(out, "{}", fields.join("\t"));
    }
    Ok(out)
}
