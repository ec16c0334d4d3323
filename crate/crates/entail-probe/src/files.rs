//! File loading, atomic writes, digests and TSV field escaping.

use std::fs;
use std::io::Write;
use std::path::Path;

use entail_probe_core::entity_index::{parse_entity_index, IndexLoadReport};
use entail_probe_core::format::{parse_dataset, serialize_dataset, ParsedDataset, FORMAT_LINE};
use entail_probe_core::prompt::{FewShotBlock, VeracityShots};
use entail_probe_core::transforms::Exclusion;
use entail_probe_core::{EntityIndex, NliSample, TaskVariant, TypeSet};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never observe a half-written file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(|e| Error::io(tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(tmp, e))?;
    f.sync_all().map_err(|e| Error::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Escapes backslash, tab, carriage return and newline.
pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Formats an optional float; absent values are empty fields.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn load_types(path: Option<&Path>) -> Result<TypeSet> {
    match path {
        None => Ok(TypeSet::default()),
        Some(p) => TypeSet::parse_config(&read_text(p)?).map_err(|e| Error::in_file(p, e)),
    }
}

pub fn load_dataset(path: &Path, variant: TaskVariant, types: &TypeSet) -> Result<ParsedDataset> {
    parse_dataset(&read_text(path)?, variant, types).map_err(|e| Error::in_file(path, e))
}

pub fn write_dataset(path: &Path, samples: &[NliSample]) -> Result<()> {
    let text = serialize_dataset(samples).map_err(|e| Error::in_file(path, e))?;
    write_file(path, text.as_bytes())
}

pub fn load_entity_index(path: &Path, types: &TypeSet) -> Result<(EntityIndex, IndexLoadReport)> {
    parse_entity_index(&read_text(path)?, types).map_err(|e| Error::in_file(path, e))
}

pub fn load_shots(path: Option<&Path>) -> Result<FewShotBlock> {
    match path {
        None => Ok(FewShotBlock::default()),
        Some(p) => FewShotBlock::parse_tsv(&read_text(p)?).map_err(|e| Error::in_file(p, e)),
    }
}

pub fn load_veracity_shots(path: Option<&Path>) -> Result<VeracityShots> {
    match path {
        None => Ok(VeracityShots::default()),
        Some(p) => VeracityShots::parse_tsv(&read_text(p)?).map_err(|e| Error::in_file(p, e)),
    }
}

pub const EXCLUSION_COLUMNS: &str = "sample_id\tvariant\treason";

pub fn exclusions_tsv(exclusions: &[Exclusion]) -> String {
    let mut out = format!("{FORMAT_LINE}\n{EXCLUSION_COLUMNS}\n");
    for e in exclusions {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            escape_field(&e.sample_id),
            e.variant.tag(),
            escape_field(&e.reason.to_string())
        ));
    }
    out
}

/// Splits a versioned TSV into data rows after checking the format line and
/// the exact column header. Blank lines are skipped. Each row comes with its
/// 1-based line number.
pub fn tsv_rows<'a>(path: &Path, text: &'a str, columns: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == FORMAT_LINE => {}
        _ => return Err(Error::in_file(path, format!("line 1: expected {FORMAT_LINE:?}"))),
    }
    match lines.next() {
        Some((_, l)) if l.trim_end_matches('\r') == columns => {}
        _ => return Err(Error::in_file(path, format!("line 2: expected column header {columns:?}"))),
    }
    let width = columns.split('\t').count();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width {
            return Err(Error::in_file(
                path,
                format!("line {}: expected {width} columns, found {}", i + 1, fields.len()),
            ));
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}
