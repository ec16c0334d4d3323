//! Per-type entity mention counts and the frequency-band pools drawn from them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::format::{split_records, FormatError, FORMAT_LINE};
use crate::types::{EntityType, TypeSet};

pub const INDEX_COLUMNS: [&str; 3] = ["surface", "etype", "mention_count"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityIndexRecord {
    pub surface: String,
    pub etype: EntityType,
    pub mention_count: u64,
}

/// Canonical order: mention count descending, then surface ascending.
pub fn canonical_order(a: &EntityIndexRecord, b: &EntityIndexRecord) -> Ordering {
    b.mention_count
        .cmp(&a.mention_count)
        .then_with(|| a.surface.cmp(&b.surface))
}

/// Which tail of the frequency ranking to sample replacements from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    /// The 5% least mentioned records of a type.
    #[serde(rename = "low5pct")]
    Low5,
    /// The 5% most mentioned records of a type.
    #[serde(rename = "high5pct")]
    High5,
}

impl Band {
    pub fn as_str(self) -> &'static str {
        match self {
            Band::Low5 => "low5pct",
            Band::High5 => "high5pct",
        }
    }
}

impl FromStr for Band {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low5pct" | "low" => Ok(Band::Low5),
            "high5pct" | "high" => Ok(Band::High5),
            _ => Err(()),
        }
    }
}

/// Number of records in a 5% band: `ceil(0.05 * n)`.
pub fn band_size(n: usize) -> usize {
    n.div_ceil(20)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityIndex {
    by_type: BTreeMap<EntityType, Vec<EntityIndexRecord>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexError {
    Duplicate { surface: String, etype: EntityType },
    Format(FormatError),
}

impl fmt::Display for IndexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexError::Duplicate { surface, etype } => {
                write!(f, "duplicate entity record ({surface}, {etype})")
            }
            IndexError::Format(e) => write!(f, "{e}"),
        }
    }
}

impl From<FormatError> for IndexError {
    fn from(e: FormatError) -> Self {
        IndexError::Format(e)
    }
}

impl EntityIndex {
    pub fn from_records<I: IntoIterator<Item = EntityIndexRecord>>(records: I) -> Result<Self, IndexError> {
        let mut by_type: BTreeMap<EntityType, Vec<EntityIndexRecord>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for r in records {
            if !seen.insert((r.surface.clone(), r.etype.clone())) {
                return Err(IndexError::Duplicate {
                    surface: r.surface,
                    etype: r.etype,
                });
            }
            by_type.entry(r.etype.clone()).or_default().push(r);
        }
        for list in by_type.values_mut() {
            list.sort_by(canonical_order);
        }
        Ok(EntityIndex { by_type })
    }

    /// Records of one type in canonical order.
    pub fn records(&self, etype: &EntityType) -> &[EntityIndexRecord] {
        self.by_type.get(etype).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn types(&self) -> impl Iterator<Item = &EntityType> {
        self.by_type.keys()
    }

    pub fn len(&self) -> usize {
        self.by_type.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_type.is_empty()
    }

    /// The band pool for a type: the first (`High5`) or last (`Low5`)
    /// `ceil(0.05 * n)` records in canonical order.
    pub fn band_pool(&self, etype: &EntityType, band: Band) -> &[EntityIndexRecord] {
        let all = self.records(etype);
        let k = band_size(all.len());
        match band {
            Band::High5 => &all[..k],
            Band::Low5 => &all[all.len() - k..],
        }
    }
}

/// Loading statistics for an index file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexLoadReport {
    pub records: usize,
    pub unknown_type_fallbacks: usize,
}

/// Parses index text with columns `surface, etype, mention_count`.
pub fn parse_entity_index(text: &str, types: &TypeSet) -> Result<(EntityIndex, IndexLoadReport), IndexError> {
    let (columns, rows) = split_records(text)?;
    let mut report = IndexLoadReport::default();
    if columns.is_empty() && rows.is_empty() {
        return Ok((EntityIndex::default(), report));
    }
    if columns != INDEX_COLUMNS {
        return Err(FormatError::ColumnHeader {
            line: 2,
            expected: INDEX_COLUMNS.join("\t"),
        }
        .into());
    }
    let mut records = Vec::with_capacity(rows.len());
    for (line, raw) in rows {
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 3 {
            return Err(FormatError::ColumnCount {
                line,
                expected: 3,
                found: f.len(),
            }
            .into());
        }
        let surface = f[0].trim();
        if surface.is_empty() {
            return Err(field(line, "surface", "empty surface"));
        }
        let count: i64 = f[2]
            .trim()
            .parse()
            .map_err(|_| field(line, "mention_count", "not an integer"))?;
        if count < 0 {
            return Err(field(line, "mention_count", "negative count"));
        }
        let (etype, fell_back) = types.resolve(f[1]);
        if fell_back {
            report.unknown_type_fallbacks += 1;
        }
        records.push(EntityIndexRecord {
            surface: surface.to_string(),
            etype,
            mention_count: count as u64,
        });
    }
    report.records = records.len();
    Ok((EntityIndex::from_records(records)?, report))
}

fn field(line: usize, field: &'static str, msg: &str) -> IndexError {
    FormatError::Field {
        line,
        field,
        message: msg.to_string(),
    }
    .into()
}

/// Writes an index in canonical order.
pub fn serialize_entity_index(index: &EntityIndex) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_LINE);
    out.push('\n');
    out.push_str(&INDEX_COLUMNS.join("\t"));
    out.push('\n');
    for list in index.by_type.values() {
        for r in list {
            out.push_str(&alloc::format!("{}\t{}\t{}\n", r.surface, r.etype, r.mention_count));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const HEADER: &str = "#format=entailprobe-v1\nsurface\tetype\tmention_count\n";

    fn rec(s: &str, t: &str, c: u64) -> EntityIndexRecord {
        EntityIndexRecord {
            surface: s.into(),
            etype: EntityType::new(t).unwrap(),
            mention_count: c,
        }
    }

    #[test]
    fn ranks_by_count() {
        let text = alloc::format!("{HEADER}Sloterdijk\tlocation\t3\nHelsinki\tlocation\t900\n");
        let (idx, report) = parse_entity_index(&text, &TypeSet::default()).unwrap();
        let loc = EntityType::new("location").unwrap();
        let names: Vec<&str> = idx.records(&loc).iter().map(|r| r.surface.as_str()).collect();
        assert_eq!(names, ["Helsinki", "Sloterdijk"]);
        assert_eq!(report.records, 2);
    }

    #[test]
    fn duplicate_record_named() {
        let text = alloc::format!("{HEADER}Oslo\tlocation\t3\nOslo\tlocation\t4\n");
        let err = parse_entity_index(&text, &TypeSet::default()).unwrap_err();
        assert_eq!(
            err,
            IndexError::Duplicate {
                surface: "Oslo".into(),
                etype: EntityType::new("location").unwrap()
            }
        );
    }

    #[test]
    fn same_surface_different_type_is_fine() {
        let idx = EntityIndex::from_records(vec![rec("Jordan", "location", 1), rec("Jordan", "person", 1)]).unwrap();
        assert_eq!(idx.len(), 2);
    }

    #[test]
    fn negative_count_rejected() {
        let text = alloc::format!("{HEADER}Oslo\tlocation\t-1\n");
        let err = parse_entity_index(&text, &TypeSet::default()).unwrap_err();
        assert!(matches!(
            err,
            IndexError::Format(FormatError::Field { line: 3, field: "mention_count", .. })
        ));
    }

    #[test]
    fn unknown_type_maps_to_thing() {
        let text = alloc::format!("{HEADER}Zork\tplanetoid\t5\n");
        let (idx, report) = parse_entity_index(&text, &TypeSet::default()).unwrap();
        assert_eq!(report.unknown_type_fallbacks, 1);
        assert_eq!(idx.records(&EntityType::fallback()).len(), 1);
    }

    #[test]
    fn band_sizes_follow_ceiling_rule() {
        assert_eq!(band_size(0), 0);
        assert_eq!(band_size(1), 1);
        assert_eq!(band_size(20), 1);
        assert_eq!(band_size(21), 2);
        assert_eq!(band_size(100), 5);
    }

    /// Brute-force band pools: sort by count in the band's direction and take
    /// ceil(5%) records, computed with floating point.
    fn oracle_pool(records: &[EntityIndexRecord], high: bool) -> BTreeSet<String> {
        let mut v: Vec<&EntityIndexRecord> = records.iter().collect();
        if high {
            v.sort_by(|a, b| b.mention_count.cmp(&a.mention_count).then(a.surface.cmp(&b.surface)));
        } else {
            v.sort_by(|a, b| a.mention_count.cmp(&b.mention_count).then(b.surface.cmp(&a.surface)));
        }
        let mut k = (records.len() as f64 * 0.05) as usize;
        if (k as f64) < records.len() as f64 * 0.05 {
            k += 1;
        }
        v.into_iter().take(k).map(|r| r.surface.clone()).collect()
    }

    #[test]
    fn hundred_record_pools_match_oracle() {
        let records: Vec<EntityIndexRecord> = (0..100u64)
            .map(|i| rec(&alloc::format!("city{i:03}"), "location", (i * 37) % 101))
            .collect();
        let idx = EntityIndex::from_records(records.clone()).unwrap();
        let loc = EntityType::new("location").unwrap();
        for (band, high) in [(Band::High5, true), (Band::Low5, false)] {
            let pool: BTreeSet<String> = idx.band_pool(&loc, band).iter().map(|r| r.surface.clone()).collect();
            assert_eq!(pool.len(), 5);
            assert_eq!(pool, oracle_pool(&records, high));
        }
    }

    proptest! {
        #[test]
        fn canonical_sort_is_idempotent(counts in prop::collection::vec(0u64..5, 0..40)) {
            let records: Vec<EntityIndexRecord> = counts
                .iter()
                .enumerate()
                .map(|(i, &c)| rec(&alloc::format!("e{}", (i * 7) % 41), "person", c))
                .collect();
            let idx = EntityIndex::from_records(records).unwrap();
            let person = EntityType::new("person").unwrap();
            let mut again = idx.records(&person).to_vec();
            again.sort_by(canonical_order);
            prop_assert_eq!(again.as_slice(), idx.records(&person));
        }

        #[test]
        fn index_text_round_trip(counts in prop::collection::vec(0u64..1000, 0..30)) {
            let records: Vec<EntityIndexRecord> = counts
                .iter()
                .enumerate()
                .map(|(i, &c)| rec(&alloc::format!("Entity {i}"), if i % 2 == 0 { "food" } else { "person" }, c))
                .collect();
            let idx = EntityIndex::from_records(records).unwrap();
            let (back, _) = parse_entity_index(&serialize_entity_index(&idx), &TypeSet::default()).unwrap();
            prop_assert_eq!(back, idx);
        }
    }
}
