//! The analyze stage: tables, curves, the JSON report and the run manifest.
//!
//! Output bytes depend only on the stage inputs. Nothing here records wall
//! clock time, absolute output paths or iteration order of hash maps.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use entail_probe_core::analysis::{
    conditional_table, consistency_split, delta_recall, hard_metrics, majority_table, pr_curve, ConditionalRow,
    Conditioner, ConsistencySubsets, CurveReport, HardMetrics, RecallRow, ScoredPrediction, VSource,
};
use entail_probe_core::freq::MARGIN;
use entail_probe_core::rng::GENERATOR_NAME;
use entail_probe_core::{ModelResponse, TaskVariant, Veracity};
use serde::{Deserialize, Serialize};

use crate::cache::ResponseCache;
use crate::config::{BackendSpec, RunConfig, ShotsMode, TemplateChoice};
use crate::error::{Error, Result};
use crate::files::{file_digest, fmt_opt, read_text, sha256_hex, write_file};
use crate::pipeline::{
    cache_path, data_path, exclusions_path, failures_path, freq_path, load_frequencies, load_predictions,
    load_variant, load_veracity, predictions_path, veracity_path, TemplateSelection, TEMPLATE_SELECTION_FILE,
};

pub const REPORT_FORMAT: &str = "entailprobe-report-v1";
pub const MANIFEST_FORMAT: &str = "entailprobe-manifest-v1";
pub const DECISION_THRESHOLD: f64 = 0.5;

pub const CONDITIONAL_COLUMNS: &str = "backend\tvariant\tcondition\tcount\tentail_count\tprobability";
pub const ENTITY_COLUMNS: &str =
    "backend\tvariant\tn\tprecision\trecall\tdelta_recall\tf1\ttp\tfp\tfn\ttn\tunparsed";
pub const CONSISTENCY_COLUMNS: &str =
    "backend\tv_source\tsubset\tn\tpositive_rate\tauc\tauc_norm\tbelow_random\tf1_at_decision\tnote";
pub const CURVE_COLUMNS: &str = "threshold\trecall\tprecision";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub auc: f64,
    pub auc_norm: f64,
    pub below_random: bool,
    pub positive_rate: f64,
    pub n: usize,
    pub excluded_unparsed: usize,
    pub s_tok_defaulted: usize,
    pub f1_at_decision: f64,
    /// Relative to the report directory.
    pub points_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: TaskVariant,
    pub samples: usize,
    pub predictions: usize,
    /// Samples without a prediction (failed requests).
    pub missing: usize,
    pub unparsed: usize,
    pub s_tok_defaulted: usize,
    pub hard: HardMetrics,
    pub curve: Option<CurveSummary>,
    pub curve_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    /// "self" or "majority".
    pub v_source: String,
    pub subset: String,
    pub n: usize,
    pub curve: Option<CurveSummary>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReport {
    pub id: String,
    pub variants: Vec<VariantReport>,
    pub conditional_veracity: Vec<ConditionalRow>,
    pub conditional_veracity_note: Option<String>,
    pub conditional_frequency: Vec<ConditionalRow>,
    pub conditional_frequency_note: Option<String>,
    pub recall: Vec<RecallRow>,
    pub recall_note: Option<String>,
    pub consistency: Vec<SubsetReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityReport {
    pub backends: Vec<String>,
    pub hypotheses: usize,
    pub note: Option<String>,
    pub consistency: Vec<SubsetReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub decision_threshold: f64,
    pub template: Option<u8>,
    pub backends: Vec<BackendReport>,
    pub majority: MajorityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendManifest {
    pub id: String,
    pub kind: String,
    pub spec: serde_json::Value,
    pub cache_file: String,
    pub cache_entries: usize,
    /// Digest of the cached responses, independent of write order.
    pub cache_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionCount {
    pub variant: TaskVariant,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool: String,
    pub version: String,
    pub generator: String,
    pub seed: Option<u64>,
    pub variants: Vec<TaskVariant>,
    pub template: Option<TemplateSelection>,
    pub template_setting: String,
    pub shots: String,
    pub ignore_veracity: bool,
    pub veracity: bool,
    pub max_tokens: u32,
    pub temperature: f64,
    pub years: [u16; 2],
    pub lookup_mode: String,
    pub config_sha256: String,
    pub backends: Vec<BackendManifest>,
    pub inputs: Vec<InputDigest>,
    pub exclusions: Vec<ExclusionCount>,
    pub assumptions: Vec<String>,
}

/// Path for the manifest: relative to the output directory for stage files,
/// relative to the config directory for inputs next to it, else as given.
fn display_path(cfg: &RunConfig, p: &Path) -> String {
    if let Ok(r) = p.strip_prefix(&cfg.output_dir) {
        return r.display().to_string();
    }
    let base = cfg.config_path.parent().unwrap_or(Path::new(""));
    match p.strip_prefix(base) {
        Ok(r) if !base.as_os_str().is_empty() => r.display().to_string(),
        _ => p.display().to_string(),
    }
}

fn curve_tsv(c: &CurveReport) -> String {
    let mut out = format!("{CURVE_COLUMNS}\n");
    for p in &c.points {
        let _ = writeln!(out, "{}\t{}\t{}", fmt_opt(p.threshold), p.recall, p.precision);
    }
    out
}

/// Curve files waiting to be written, keyed by path under the report dir.
type CurveFiles = BTreeMap<String, String>;

fn summarize_curve(
    preds: &[ScoredPrediction],
    points_file: String,
    curves: &mut CurveFiles,
) -> (Option<CurveSummary>, Option<String>) {
    match pr_curve(preds) {
        Ok(c) => {
            curves.insert(points_file.clone(), curve_tsv(&c));
            (
                Some(CurveSummary {
                    auc: c.auc,
                    auc_norm: c.auc_norm,
                    below_random: c.below_random,
                    positive_rate: c.positive_rate,
                    n: c.n,
                    excluded_unparsed: c.excluded_unparsed,
                    s_tok_defaulted: c.s_tok_defaulted,
                    f1_at_decision: c.f1_at_decision,
                    points_file,
                }),
                None,
            )
        }
        Err(e) => (None, Some(e.to_string())),
    }
}

fn consistency_reports(
    backend: &str,
    source_name: &str,
    preds: &[ScoredPrediction],
    source: VSource<'_>,
    curves: &mut CurveFiles,
) -> Vec<SubsetReport> {
    let split = consistency_split(preds, source);
    split
        .by_name()
        .iter()
        .map(|(name, ids)| {
            let members = ConsistencySubsets::members(preds, ids);
            let file = format!("curves/{backend}/consistency_{source_name}_{name}.tsv");
            let (curve, note) = if members.is_empty() {
                (None, Some("empty subset".to_string()))
            } else {
                summarize_curve(&members, file, curves)
            };
            SubsetReport {
                v_source: source_name.to_string(),
                subset: name.to_string(),
                n: members.len(),
                curve,
                note,
            }
        })
        .collect()
}

struct BackendData {
    id: String,
    by_variant: BTreeMap<TaskVariant, Vec<ScoredPrediction>>,
    counts: BTreeMap<TaskVariant, (usize, usize)>,
    veracity: Option<BTreeMap<String, Veracity>>,
}

fn load_backend(
    cfg: &RunConfig,
    id: &str,
    datasets: &BTreeMap<TaskVariant, Vec<entail_probe_core::NliSample>>,
    freqs: &BTreeMap<TaskVariant, Option<HashMap<String, entail_probe_core::FrequencyVerdict>>>,
) -> Result<BackendData> {
    let vpath = veracity_path(cfg, id);
    let veracity = if vpath.exists() { Some(load_veracity(&vpath)?) } else { None };
    let mut by_variant = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (&v, samples) in datasets {
        let path = predictions_path(cfg, id, v);
        if !path.exists() {
            return Err(Error::data(format!(
                "{} is missing; run `run` for backend {id} and variant {}",
                path.display(),
                v.tag()
            )));
        }
        let rows: HashMap<String, _> = load_predictions(&path)?
            .into_iter()
            .map(|r| (r.sample_id.clone(), r))
            .collect();
        let fmap = freqs.get(&v).and_then(Option::as_ref);
        let mut preds = Vec::with_capacity(samples.len());
        for s in samples {
            let Some(r) = rows.get(&s.id) else { continue };
            let response = ModelResponse {
                raw_text: r.raw_text.clone(),
                choice: r.choice,
                s_tok: r.s_tok,
                backend_id: id.to_string(),
                cached: false,
            };
            let vv = veracity.as_ref().and_then(|m| m.get(&s.hypothesis.render()).copied());
            let f = fmap.and_then(|m| m.get(&s.id)).map(|fv| fv.class);
            let p = ScoredPrediction::new(s, &response, vv, f)
                .map_err(|e| Error::in_file(&path, format!("sample {}: {e}", s.id)))?;
            preds.push(p);
        }
        counts.insert(v, (samples.len(), samples.len() - preds.len()));
        by_variant.insert(v, preds);
    }
    Ok(BackendData {
        id: id.to_string(),
        by_variant,
        counts,
        veracity,
    })
}

fn conditional(preds: &[ScoredPrediction], c: Conditioner) -> (Vec<ConditionalRow>, Option<String>) {
    match conditional_table(preds, c) {
        Ok(t) => (t.rows, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    }
}

fn backend_report(cfg: &RunConfig, d: &BackendData, curves: &mut CurveFiles) -> BackendReport {
    let mut variants = Vec::new();
    for (&v, preds) in &d.by_variant {
        let (samples, missing) = d.counts[&v];
        let file = format!("curves/{}/{}.tsv", d.id, v.tag());
        let (curve, curve_note) = summarize_curve(preds, file, curves);
        variants.push(VariantReport {
            variant: v,
            samples,
            predictions: preds.len(),
            missing,
            unparsed: preds.iter().filter(|p| p.s_ent.is_none()).count(),
            s_tok_defaulted: preds.iter().filter(|p| p.s_tok_defaulted).count(),
            hard: hard_metrics(preds),
            curve,
            curve_note,
        });
    }
    let all: Vec<ScoredPrediction> = d.by_variant.values().flatten().cloned().collect();
    let (conditional_veracity, conditional_veracity_note) = conditional(&all, Conditioner::Veracity);
    let (conditional_frequency, conditional_frequency_note) = conditional(&all, Conditioner::Frequency);
    let (recall, recall_note) = match delta_recall(&d.by_variant) {
        Ok(rows) => (rows, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let consistency = match d.by_variant.get(&TaskVariant::I) {
        Some(base) if cfg.veracity || base.iter().any(|p| p.f.is_some()) => {
            consistency_reports(&d.id, "self", base, VSource::SelfReported, curves)
        }
        _ => Vec::new(),
    };
    BackendReport {
        id: d.id.clone(),
        variants,
        conditional_veracity,
        conditional_veracity_note,
        conditional_frequency,
        conditional_frequency_note,
        recall,
        recall_note,
        consistency,
    }
}

fn conditional_rows(out: &mut String, backend: &str, rows: &[ConditionalRow]) {
    for r in rows {
        let _ = writeln!(
            out,
            "{backend}\t{}\t{}\t{}\t{}\t{}",
            r.variant.tag(),
            r.condition,
            r.count,
            r.entail_count,
            fmt_opt(r.probability)
        );
    }
}

fn subset_rows(out: &mut String, backend: &str, rows: &[SubsetReport]) {
    for s in rows {
        let (pr, auc, norm, below, f1) = match &s.curve {
            Some(c) => (
                c.positive_rate.to_string(),
                c.auc.to_string(),
                c.auc_norm.to_string(),
                c.below_random.to_string(),
                c.f1_at_decision.to_string(),
            ),
            None => Default::default(),
        };
        let _ = writeln!(
            out,
            "{backend}\t{}\t{}\t{}\t{pr}\t{auc}\t{norm}\t{below}\t{f1}\t{}",
            s.v_source,
            s.subset,
            s.n,
            s.note.as_deref().unwrap_or("")
        );
    }
}

fn tables(report: &Report) -> BTreeMap<&'static str, String> {
    let mut cv = format!("{CONDITIONAL_COLUMNS}\n");
    let mut cf = format!("{CONDITIONAL_COLUMNS}\n");
    let mut er = format!("{ENTITY_COLUMNS}\n");
    let mut ca = format!("{CONSISTENCY_COLUMNS}\n");
    for b in &report.backends {
        conditional_rows(&mut cv, &b.id, &b.conditional_veracity);
        conditional_rows(&mut cf, &b.id, &b.conditional_frequency);
        for v in &b.variants {
            let dr = b
                .recall
                .iter()
                .find(|r| r.variant == v.variant)
                .and_then(|r| r.delta_recall);
            let m = &v.hard;
            let _ = writeln!(
                er,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                b.id,
                v.variant.tag(),
                v.predictions,
                fmt_opt(m.precision),
                fmt_opt(m.recall),
                fmt_opt(dr),
                m.f1,
                m.tp,
                m.fp,
                m.fn_,
                m.tn,
                v.unparsed
            );
        }
        subset_rows(&mut ca, &b.id, &b.consistency);
    }
    subset_rows(&mut ca, "majority", &report.majority.consistency);
    BTreeMap::from([
        ("conditional_veracity.tsv", cv),
        ("conditional_frequency.tsv", cf),
        ("entity_results.tsv", er),
        ("consistency_auc.tsv", ca),
    ])
}

fn assumptions(cfg: &RunConfig) -> Vec<String> {
    vec![
        format!("hard decision: choice A is Entail, B or C is NoEntail, equal to threshold {DECISION_THRESHOLD} on s_ent"),
        "s_ent = 0.5 + 0.5*[A]*s_tok - 0.5*[B or C]*s_tok; a missing s_tok counts as 1.0 and is flagged".into(),
        "unparsed responses: left out of curves, counted as NoEntail in hard-label tables, tallied per variant".into(),
        "PR curve: thresholds at distinct s_ent values with ties entering together, anchor (0, first precision), trapezoid area".into(),
        "auc_norm = (auc - positive_rate) / (1 - positive_rate); negative values are kept and flagged below_random".into(),
        "http s_tok: probability (or exp of log-probability) of the first answer token as mapped by the backend config".into(),
        "V consistent: (Entail and V=True) or (NoEntail and V!=True); F subsets leave out Draw".into(),
        "majority veracity: strict majority for True or False, otherwise Unknown; a missing vote counts as Unknown".into(),
        format!(
            "frequency: averaged yearly relative frequency over {}-{}, Win/Lose at a {MARGIN}x ratio",
            cfg.years.first, cfg.years.last
        ),
    ]
}

fn push_input(cfg: &RunConfig, inputs: &mut Vec<InputDigest>, role: &str, p: &Path) -> Result<()> {
    if p.exists() {
        inputs.push(InputDigest {
            role: role.to_string(),
            path: display_path(cfg, p),
            sha256: file_digest(p)?,
        });
    }
    Ok(())
}

fn relative_spec(cfg: &RunConfig, spec: &BackendSpec) -> serde_json::Value {
    let mut spec = spec.clone();
    match &mut spec {
        BackendSpec::Simulator { sim, .. } => {
            if let Some(p) = &sim.veracity_table {
                sim.veracity_table = Some(PathBuf::from(display_path(cfg, p)));
            }
        }
        BackendSpec::Replay { transcript, .. } => *transcript = PathBuf::from(display_path(cfg, transcript)),
        BackendSpec::Http { .. } => {}
    }
    serde_json::to_value(&spec).expect("spec serializes")
}

fn manifest(cfg: &RunConfig, selection: Option<TemplateSelection>, datasets: &[TaskVariant]) -> Result<Manifest> {
    let mut inputs = Vec::new();
    let mut external: Vec<(&str, Option<&Path>)> = vec![
        ("config", Some(cfg.config_path.as_path())),
        ("dataset", cfg.dataset.as_deref()),
        ("dev_pool", cfg.dev_pool.as_deref()),
        ("entity_index", cfg.entity_index.as_deref()),
        ("types", cfg.types.as_deref()),
        ("shots_file", cfg.shots_file.as_deref()),
        ("veracity_shots_file", cfg.veracity_shots_file.as_deref()),
    ];
    let index = cfg.effective_ngram_index();
    external.push(("ngram_index", Some(index.as_path())));
    for (role, p) in external {
        if let Some(p) = p {
            push_input(cfg, &mut inputs, role, p)?;
        }
    }
    for spec in &cfg.backends {
        match spec {
            BackendSpec::Simulator { sim, .. } => {
                if let Some(p) = &sim.veracity_table {
                    push_input(cfg, &mut inputs, "veracity_table", p)?;
                }
            }
            BackendSpec::Replay { transcript, .. } => push_input(cfg, &mut inputs, "transcript", transcript)?,
            BackendSpec::Http { .. } => {}
        }
    }
    let mut exclusions = Vec::new();
    for &v in datasets {
        push_input(cfg, &mut inputs, "data", &data_path(cfg, v))?;
        let ex = exclusions_path(cfg, v);
        push_input(cfg, &mut inputs, "exclusions", &ex)?;
        if ex.exists() {
            let n = read_text(&ex)?.lines().skip(2).filter(|l| !l.is_empty()).count();
            exclusions.push(ExclusionCount { variant: v, count: n });
        }
        push_input(cfg, &mut inputs, "frequency", &freq_path(cfg, v))?;
    }
    push_input(cfg, &mut inputs, "template_selection", &cfg.predictions_dir().join(TEMPLATE_SELECTION_FILE))?;
    let mut backends = Vec::new();
    for spec in &cfg.backends {
        let id = spec.id();
        for &v in datasets {
            push_input(cfg, &mut inputs, "predictions", &predictions_path(cfg, id, v))?;
        }
        push_input(cfg, &mut inputs, "veracity", &veracity_path(cfg, id))?;
        push_input(cfg, &mut inputs, "failures", &failures_path(cfg, id))?;
        let cpath = cache_path(cfg, id);
        let (entries, digest) = if cpath.exists() {
            let c = ResponseCache::open(&cpath)?;
            (c.len(), c.content_digest())
        } else {
            (0, ResponseCache::in_memory().content_digest())
        };
        backends.push(BackendManifest {
            id: id.to_string(),
            kind: match spec {
                BackendSpec::Simulator { .. } => "simulator",
                BackendSpec::Http { .. } => "http",
                BackendSpec::Replay { .. } => "replay",
            }
            .to_string(),
            spec: relative_spec(cfg, spec),
            cache_file: display_path(cfg, &cpath),
            cache_entries: entries,
            cache_digest: digest,
        });
    }
    Ok(Manifest {
        format: MANIFEST_FORMAT.into(),
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        generator: GENERATOR_NAME.into(),
        seed: cfg.seed,
        variants: cfg.variants.clone(),
        template: selection,
        template_setting: match cfg.template {
            TemplateChoice::Auto => "auto".into(),
            TemplateChoice::Fixed(t) => t.id().to_string(),
        },
        shots: match cfg.shots {
            ShotsMode::Zero => "zero".into(),
            ShotsMode::Few4 => "few4".into(),
        },
        ignore_veracity: cfg.ignore_veracity,
        veracity: cfg.veracity,
        max_tokens: cfg.max_tokens,
        temperature: cfg.temperature,
        years: [cfg.years.first, cfg.years.last],
        lookup_mode: serde_json::to_value(cfg.lookup_mode)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        config_sha256: sha256_hex(&std::fs::read(&cfg.config_path).map_err(|e| Error::io(&cfg.config_path, e))?),
        backends,
        inputs,
        exclusions,
        assumptions: assumptions(cfg),
    })
}

/// Builds every report file and writes them under `report/`, replacing
/// whatever an earlier analyze left there.
pub fn analyze(cfg: &RunConfig) -> Result<Report> {
    if cfg.backends.is_empty() {
        return Err(Error::config("backend: at least one backend is required"));
    }
    let mut datasets = BTreeMap::new();
    let mut freqs = BTreeMap::new();
    for &v in &cfg.variants {
        datasets.insert(v, load_variant(cfg, v)?);
        freqs.insert(v, load_frequencies(cfg, v)?);
    }
    let data: Vec<BackendData> = cfg
        .backends
        .iter()
        .map(|b| load_backend(cfg, b.id(), &datasets, &freqs))
        .collect::<Result<_>>()?;

    let sel_path = cfg.predictions_dir().join(TEMPLATE_SELECTION_FILE);
    let selection: Option<TemplateSelection> = if sel_path.exists() {
        Some(serde_json::from_str(&read_text(&sel_path)?).map_err(|e| Error::in_file(&sel_path, e))?)
    } else {
        None
    };

    let mut curves = CurveFiles::new();
    let backends: Vec<BackendReport> = data.iter().map(|d| backend_report(cfg, d, &mut curves)).collect();

    let voters: Vec<&BackendData> = data.iter().filter(|d| d.veracity.is_some()).collect();
    let mut majority_subsets = Vec::new();
    let majority = match majority_table(&voters.iter().map(|d| d.veracity.as_ref().expect("filtered")).collect::<Vec<_>>()) {
        Ok(table) => {
            // Every backend is scored against the shared majority veracity.
            for d in &data {
                if let Some(base) = d.by_variant.get(&TaskVariant::I) {
                    let rows = consistency_reports(&d.id, "majority", base, VSource::Majority(&table), &mut curves);
                    majority_subsets.extend(rows.into_iter().map(|mut r| {
                        r.v_source = format!("majority:{}", d.id);
                        r
                    }));
                }
            }
            MajorityReport {
                backends: voters.iter().map(|d| d.id.clone()).collect(),
                hypotheses: table.len(),
                note: None,
                consistency: std::mem::take(&mut majority_subsets),
            }
        }
        Err(e) => MajorityReport {
            backends: voters.iter().map(|d| d.id.clone()).collect(),
            hypotheses: 0,
            note: Some(e.to_string()),
            consistency: Vec::new(),
        },
    };

    let report = Report {
        format: REPORT_FORMAT.into(),
        decision_threshold: DECISION_THRESHOLD,
        template: selection.as_ref().map(|s| s.template),
        backends,
        majority,
    };
    let manifest = manifest(cfg, selection, &cfg.variants)?;

    let dir = cfg.report_dir();
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&dir.join("report.json"), format!("{json}\n").as_bytes())?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join("manifest.json"), format!("{json}\n").as_bytes())?;
    for (name, text) in tables(&report) {
        write_file(&dir.join(name), text.as_bytes())?;
    }
    for (name, text) in &curves {
        write_file(&dir.join(name), text.as_bytes())?;
    }
    Ok(report)
}
