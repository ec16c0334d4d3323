//! N-gram dump ingestion and the binary frequency index.
//!
//! The dump is a TSV of `phrase, year, match_count[, volume_count]` rows and
//! the totals file a TSV of `year, total_count` rows; `#` lines are comments
//! in both. Counts for the same phrase and year are summed, then divided by
//! the year's total.
//!
//! Index layout (all integers little-endian):
//!
//! ```text
//! b"NGIX1"
//! u32 source length, source bytes (UTF-8)
//! u16 first year, u16 last year
//! u32 phrase count
//! per phrase, in byte order of the phrase:
//!   u32 phrase length, phrase bytes
//!   u32 year count
//!   per year, ascending: u16 year, f64 relative frequency (IEEE bits)
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use entail_probe_core::freq::normalize_phrase;
use entail_probe_core::{NgramStore, YearRange};
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"NGIX1";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub rows: u64,
    pub malformed: u64,
    pub outside_span: u64,
    pub missing_total: u64,
    pub phrases: usize,
    /// Years in the span that have no total.
    pub years_without_total: Vec<u16>,
}

/// Reads `year, total` rows. Any malformed row is an error because every
/// frequency depends on these values.
pub fn read_totals<R: BufRead>(reader: R, origin: &str) -> Result<BTreeMap<u16, f64>> {
    let mut totals = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::data(format!("{origin}: {e}")))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut f = line.split('\t');
        let year = f.next().and_then(|y| y.trim().parse::<u16>().ok());
        let total = f.next().and_then(|t| t.trim().parse::<f64>().ok());
        match (year, total) {
            (Some(y), Some(t)) if t > 0.0 && t.is_finite() => {
                *totals.entry(y).or_insert(0.0) += t;
            }
            _ => {
                return Err(Error::data(format!(
                    "{origin}: line {}: expected year and positive total",
                    i + 1
                )))
            }
        }
    }
    Ok(totals)
}

fn parse_row(line: &str) -> Option<(String, u16, u64)> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 && fields.len() != 4 {
        return None;
    }
    let phrase = normalize_phrase(fields[0]);
    if phrase.is_empty() {
        return None;
    }
    let year = fields[1].trim().parse().ok()?;
    let count = fields[2].trim().parse().ok()?;
    if let Some(v) = fields.get(3) {
        v.trim().parse::<u64>().ok()?;
    }
    Some((phrase, year, count))
}

/// Builds a store from a dump reader and per-year totals.
pub fn ingest<R: BufRead>(
    dump: R,
    totals: &BTreeMap<u16, f64>,
    span: YearRange,
    source: &str,
) -> Result<(NgramStore, IngestReport)> {
    let mut report = IngestReport::default();
    let mut counts: BTreeMap<String, BTreeMap<u16, u64>> = BTreeMap::new();
    for line in dump.lines() {
        let line = line.map_err(|e| Error::data(format!("{source}: {e}")))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        report.rows += 1;
        let Some((phrase, year, count)) = parse_row(trimmed) else {
            report.malformed += 1;
            continue;
        };
        if year < span.first || year > span.last {
            report.outside_span += 1;
            continue;
        }
        if !totals.contains_key(&year) {
            report.missing_total += 1;
            continue;
        }
        let slot = counts.entry(phrase).or_default().entry(year).or_insert(0);
        *slot = slot.saturating_add(count);
    }
    let mut store = NgramStore::new(source, span);
    for (phrase, years) in &counts {
        for (&year, &count) in years {
            store
                .insert(phrase, year, count as f64 / totals[&year])
                .map_err(|e| Error::data(e.to_string()))?;
        }
    }
    report.phrases = store.len();
    report.years_without_total = (span.first..=span.last).filter(|y| !totals.contains_key(y)).collect();
    Ok((store, report))
}

/// Ingests files from disk. A missing totals file is an error.
pub fn ingest_files(dump: &Path, totals: &Path, span: YearRange) -> Result<(NgramStore, IngestReport)> {
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| Error::io(p, e));
    let totals_map = read_totals(open(totals)?, &totals.display().to_string())?;
    let source = dump
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    ingest(open(dump)?, &totals_map, span, &source)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_index(store: &NgramStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_str(&mut out, store.source());
    out.extend_from_slice(&store.span().first.to_le_bytes());
    out.extend_from_slice(&store.span().last.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (phrase, years) in store.iter() {
        put_str(&mut out, phrase);
        out.extend_from_slice(&(years.len() as u32).to_le_bytes());
        for (&y, &v) in years {
            out.extend_from_slice(&y.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::data(format!("n-gram index truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::data("n-gram index holds invalid UTF-8"))
    }
}

pub fn decode_index(bytes: &[u8]) -> Result<NgramStore> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::data("not an n-gram index (bad magic)"));
    }
    let source = c.string()?;
    let span = YearRange {
        first: c.u16()?,
        last: c.u16()?,
    };
    let mut store = NgramStore::new(&source, span);
    for _ in 0..c.u32()? {
        let phrase = c.string()?;
        for _ in 0..c.u32()? {
            let year = c.u16()?;
            let v = c.f64()?;
            store.insert(&phrase, year, v).map_err(|e| Error::data(e.to_string()))?;
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::data("n-gram index has trailing bytes"));
    }
    Ok(store)
}

pub fn load_index(path: &Path) -> Result<NgramStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&bytes).map_err(|e| Error::in_file(path, e.message))
}
