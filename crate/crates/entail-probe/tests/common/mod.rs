//! Synthetic inputs and CLI helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use entail_probe_core::format::serialize_dataset;
use entail_probe_core::lemma::lemmatize_predicate;
use entail_probe_core::{Direction, EntityType, KeyedRng, Label, NliSample, Proposition, Seed, TaskVariant};
use sha2::{Digest, Sha256};

/// Templates grouped by type signature, so random premises always have
/// several same-signature alternatives.
pub const VOCABULARY: [(&str, &str, [&str; 6]); 4] = [
    (
        "person",
        "organization",
        ["{X} founded {Y}", "{X} works for {Y}", "{X} led {Y}", "{X} joined {Y}", "{X} left {Y}", "{X} chairs {Y}"],
    ),
    (
        "person",
        "location",
        [
            "{X} was born in {Y}",
            "{X} lives in {Y}",
            "{X} visited {Y}",
            "{X} was the governor of {Y}",
            "{X} is a politician from {Y}",
            "{X} moved to {Y}",
        ],
    ),
    (
        "organization",
        "product",
        ["{X} makes {Y}", "{X} sells {Y}", "{X} produces {Y}", "{X} designed {Y}", "{X} released {Y}", "{X} markets {Y}"],
    ),
    (
        "location",
        "food",
        ["{X} exports tons of {Y}", "{X} exports {Y}", "{X} grows {Y}", "{X} imports {Y}", "{X} eats {Y}", "{X} consumes {Y}"],
    ),
];

fn prop(t: &str, x: &str, xt: &str, y: &str, yt: &str) -> Proposition {
    Proposition::new(t, x, EntityType::new(xt).unwrap(), y, EntityType::new(yt).unwrap()).unwrap()
}

/// `n_pairs` forward/reverse pairs with distinct entities per pair.
pub fn synth_samples(n_pairs: usize, seed: u64, prefix: &str) -> Vec<NliSample> {
    let mut out = Vec::with_capacity(2 * n_pairs);
    for i in 0..n_pairs {
        let pid = format!("{prefix}{i}");
        let mut rng = KeyedRng::from_str_key(Seed(seed), &["synth", &pid]);
        let (xt, yt, templates) = VOCABULARY[rng.below(VOCABULARY.len())];
        let a = rng.below(6);
        let b = (a + 1 + rng.below(5)) % 6;
        let x = format!("{xt} {prefix}{i}x");
        let y = format!("{yt} {prefix}{i}y");
        let p = prop(templates[a], &x, xt, &y, yt);
        let h = prop(templates[b], &x, xt, &y, yt);
        out.push(NliSample {
            id: format!("{pid}-f"),
            pair_id: pid.clone(),
            direction: Direction::Forward,
            premise: p.clone(),
            hypothesis: h.clone(),
            gold: Label::Entail,
            variant: TaskVariant::I,
        });
        out.push(NliSample {
            id: format!("{pid}-r"),
            pair_id: pid,
            direction: Direction::Reverse,
            premise: h,
            hypothesis: p,
            gold: Label::NoEntail,
            variant: TaskVariant::I,
        });
    }
    out
}

pub fn write_samples(path: &Path, samples: &[NliSample]) {
    std::fs::write(path, serialize_dataset(samples).unwrap()).unwrap();
}

/// Twenty entities per type with distinct mention counts from 1 to about 13k.
pub fn write_entity_index(path: &Path) {
    let mut text = String::from("#format=entailprobe-v1\nsurface\tetype\tmention_count\n");
    for t in ["person", "organization", "location", "product", "food"] {
        for k in 0..20u64 {
            let _ = writeln!(text, "{t} entity {k}\t{t}\t{}", 1 + k * k * 37);
        }
    }
    std::fs::write(path, text).unwrap();
}

/// Dump and totals files giving every vocabulary predicate a frequency
/// from `freq_of(template index within its group)`.
pub fn write_ngrams(dump: &Path, totals: &Path, freq_of: impl Fn(usize, usize) -> u64) {
    let mut d = String::new();
    for (g, (xt, yt, templates)) in VOCABULARY.iter().enumerate() {
        for (i, t) in templates.iter().enumerate() {
            let lemma = lemmatize_predicate(&prop(t, "a", xt, "b", yt)).unwrap();
            for year in [2000, 2001] {
                let _ = writeln!(d, "{lemma}\t{year}\t{}", freq_of(g, i));
            }
        }
    }
    std::fs::write(dump, d).unwrap();
    std::fs::write(totals, "2000\t1000000\n2001\t1000000\n").unwrap();
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_entail-probe"))
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn cli_ok(args: &[&str]) -> Output {
    let out = cli(args);
    assert!(
        out.status.success(),
        "entail-probe {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn sha256_file(p: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(p).unwrap()))
}

/// Relative path → SHA-256 for every file below `dir`.
pub fn dir_digests(dir: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, sha256_file(&p));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn write_config(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}
