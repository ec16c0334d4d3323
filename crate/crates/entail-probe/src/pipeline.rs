//! The transform, freq and run stages.
//!
//! Every stage reads from the configured inputs or from earlier stage output
//! under the output directory and writes only below that directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use entail_probe_core::analysis::{pr_curve, ScoredPrediction};
use entail_probe_core::format::FORMAT_LINE;
use entail_probe_core::freq::{classify_frequency, FrequencyVerdict, LookupPath};
use entail_probe_core::prompt::{render_inference_prompt, render_veracity_prompt, FewShotBlock, PromptTemplate};
use entail_probe_core::response::PromptKind;
use entail_probe_core::simulate::BiasParams;
use entail_probe_core::transforms::{compose_rp_ta, transform_random_args, transform_random_premise, transform_type_args, PredicatePool, TransformOutput};
use entail_probe_core::{Band, FrequencyClass, KeyedRng, ModelResponse, NliSample, ParsedChoice, Proposition, Seed, TaskVariant, Veracity};
use serde::{Deserialize, Serialize};

use crate::backend::{query_all, Backend, BackendRequest, HttpBackend, RecordingTransport, ReplayTransport, ReqwestTransport, SimulatorBackend};
use crate::cache::ResponseCache;
use crate::config::{BackendSpec, RunConfig, ShotsMode, SimulatorSpec, TemplateChoice};
use crate::error::{Error, Result};
use crate::files::{self, escape_field, exclusions_tsv, fmt_opt, read_text, tsv_rows, unescape_field, write_file};
use crate::ngram;

pub const FREQ_COLUMNS: &str =
    "sample_id\tprem_freq\thyp_freq\tratio\tverdict\tprem_lemma\thyp_lemma\tprem_path\thyp_path";
pub const PREDICTION_COLUMNS: &str = "sample_id\tvariant\tchoice\ts_tok\ts_ent\tpredicted\tgold\traw_text";
pub const VERACITY_COLUMNS: &str = "hypothesis\tchoice\tveracity\ts_tok\traw_text";
pub const FAILURE_COLUMNS: &str = "kind\tvariant\tsample_id\tmessage";
pub const TEMPLATE_SELECTION_FILE: &str = "template_selection.json";

pub fn data_path(cfg: &RunConfig, v: TaskVariant) -> PathBuf {
    cfg.data_dir().join(format!("{}.tsv", v.tag()))
}

pub fn exclusions_path(cfg: &RunConfig, v: TaskVariant) -> PathBuf {
    cfg.data_dir().join(format!("{}.exclusions.tsv", v.tag()))
}

pub fn freq_path(cfg: &RunConfig, v: TaskVariant) -> PathBuf {
    cfg.freq_dir().join(format!("{}.tsv", v.tag()))
}

pub fn predictions_path(cfg: &RunConfig, backend: &str, v: TaskVariant) -> PathBuf {
    cfg.predictions_dir().join(backend).join(format!("{}.tsv", v.tag()))
}

pub fn veracity_path(cfg: &RunConfig, backend: &str) -> PathBuf {
    cfg.predictions_dir().join(backend).join("veracity.tsv")
}

pub fn failures_path(cfg: &RunConfig, backend: &str) -> PathBuf {
    cfg.predictions_dir().join(backend).join("failures.tsv")
}

pub fn cache_path(cfg: &RunConfig, backend: &str) -> PathBuf {
    cfg.cache_dir().join(format!("{backend}.jsonl"))
}

// ---------------------------------------------------------------------------
// transform

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariantCount {
    pub variant: TaskVariant,
    pub samples: usize,
    pub excluded: usize,
}

/// Writes `data/<tag>.tsv` and `data/<tag>.exclusions.tsv` for I and every
/// configured variant.
pub fn transform(cfg: &RunConfig) -> Result<Vec<VariantCount>> {
    cfg.validate_transform()?;
    let types = files::load_types(cfg.types.as_deref())?;
    let dataset = cfg.dataset.as_deref().expect("validated");
    let base = files::load_dataset(dataset, TaskVariant::I, &types)?;
    for w in &base.report.warnings {
        log::warn!("{}: {w}", dataset.display());
    }
    let seed = Seed(cfg.seed.unwrap_or(0));
    let pool = match &cfg.dev_pool {
        Some(p) if cfg.variants.iter().any(|v| v.forces_no_entail()) => {
            let dev = files::load_dataset(p, TaskVariant::I, &types)?;
            Some(PredicatePool::from_samples(&dev.samples))
        }
        _ => None,
    };
    let index = match &cfg.entity_index {
        Some(p) if cfg.variants.iter().any(|v| matches!(v, TaskVariant::RandomArgsLow | TaskVariant::RandomArgsHigh)) => {
            let (index, report) = files::load_entity_index(p, &types)?;
            log::info!("{}: {report:?}", p.display());
            Some(index)
        }
        _ => None,
    };

    let mut variants = vec![TaskVariant::I];
    variants.extend(cfg.variants.iter().copied().filter(|v| *v != TaskVariant::I));
    let mut counts = Vec::new();
    for v in variants {
        let out = match v {
            TaskVariant::I => TransformOutput {
                samples: base.samples.clone(),
                exclusions: Vec::new(),
            },
            TaskVariant::TypedArgs => TransformOutput {
                samples: transform_type_args(&base.samples),
                exclusions: Vec::new(),
            },
            TaskVariant::RandomPremise => transform_random_premise(&base.samples, pool.as_ref().expect("validated"), seed),
            TaskVariant::RandomPremiseTypedArgs => compose_rp_ta(&base.samples, pool.as_ref().expect("validated"), seed),
            TaskVariant::RandomArgsLow => transform_random_args(&base.samples, index.as_ref().expect("validated"), Band::Low5, seed),
            TaskVariant::RandomArgsHigh => transform_random_args(&base.samples, index.as_ref().expect("validated"), Band::High5, seed),
        };
        files::write_dataset(&data_path(cfg, v), &out.samples)?;
        write_file(&exclusions_path(cfg, v), exclusions_tsv(&out.exclusions).as_bytes())?;
        counts.push(VariantCount {
            variant: v,
            samples: out.samples.len(),
            excluded: out.exclusions.len(),
        });
    }
    Ok(counts)
}

/// Loads a stage-one dataset file, pointing at `transform` when it is absent.
pub fn load_variant(cfg: &RunConfig, v: TaskVariant) -> Result<Vec<NliSample>> {
    let path = data_path(cfg, v);
    if !path.exists() {
        return Err(Error::data(format!(
            "{} is missing; run `transform` for variant {}",
            path.display(),
            v.tag()
        )));
    }
    let types = files::load_types(cfg.types.as_deref())?;
    Ok(files::load_dataset(&path, v, &types)?.samples)
}

// ---------------------------------------------------------------------------
// freq

/// Builds the binary n-gram index from the configured dump.
pub fn freq_ingest(cfg: &RunConfig) -> Result<ngram::IngestReport> {
    let src = cfg
        .ngram
        .as_ref()
        .ok_or_else(|| Error::config("ngram: dump and totals are required for `freq ingest`"))?;
    for (field, p) in [("ngram.dump", &src.dump), ("ngram.totals", &src.totals)] {
        if !p.exists() {
            return Err(Error::config(format!("{field}: {} does not exist", p.display())));
        }
    }
    let (store, report) = ngram::ingest_files(&src.dump, &src.totals, cfg.years)?;
    write_file(&cfg.freq_dir().join("ngrams.ngix"), &ngram::encode_index(&store))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&cfg.freq_dir().join("ingest_report.json"), json.as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FreqCount {
    pub variant: Option<TaskVariant>,
    pub win: usize,
    pub lose: usize,
    pub draw: usize,
}

/// Classifies every sample of every configured variant into `freq/<tag>.tsv`.
pub fn freq_classify(cfg: &RunConfig) -> Result<Vec<FreqCount>> {
    let index = cfg.effective_ngram_index();
    if !index.exists() {
        return Err(Error::config(format!(
            "ngram_index: {} does not exist; set ngram_index or run `freq ingest`",
            index.display()
        )));
    }
    let store = ngram::load_index(&index)?;
    let mut out = Vec::new();
    for &v in &cfg.variants {
        let samples = load_variant(cfg, v)?;
        let mut text = format!("{FORMAT_LINE}\n{FREQ_COLUMNS}\n");
        let mut count = FreqCount {
            variant: Some(v),
            ..FreqCount::default()
        };
        for s in &samples {
            let fv = classify_frequency(&s.premise, &s.hypothesis, &store, cfg.years, cfg.lookup_mode.into())
                .map_err(|e| Error::data(format!("{} sample {}: {e}", v.tag(), s.id)))?;
            match fv.class {
                FrequencyClass::Win => count.win += 1,
                FrequencyClass::Lose => count.lose += 1,
                FrequencyClass::Draw => count.draw += 1,
            }
            text.push_str(&format!(
                "{}\t{:e}\t{:e}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                escape_field(&s.id),
                fv.premise_freq,
                fv.hypothesis_freq,
                fv.ratio,
                fv.class,
                escape_field(&fv.premise_lemma),
                escape_field(&fv.hypothesis_lemma),
                fv.premise_path.as_str(),
                fv.hypothesis_path.as_str()
            ));
        }
        write_file(&freq_path(cfg, v), text.as_bytes())?;
        out.push(count);
    }
    Ok(out)
}

fn parse_path(s: &str) -> Option<LookupPath> {
    [LookupPath::Phrase, LookupPath::HeadVerb, LookupPath::Missing]
        .into_iter()
        .find(|p| p.as_str() == s)
}

/// Reads `freq/<tag>.tsv` back into verdicts keyed by sample id; `None` when
/// the file has not been produced.
pub fn load_frequencies(cfg: &RunConfig, v: TaskVariant) -> Result<Option<HashMap<String, FrequencyVerdict>>> {
    let path = freq_path(cfg, v);
    if !path.exists() {
        return Ok(None);
    }
    let text = read_text(&path)?;
    let mut map = HashMap::new();
    for (line, f) in tsv_rows(&path, &text, FREQ_COLUMNS)? {
        let bad = |field: &str| Error::in_file(&path, format!("line {line}: bad {field} {:?}", f[0]));
        let num = |i: usize, field: &str| f[i].parse::<f64>().map_err(|_| bad(field));
        let verdict = FrequencyVerdict {
            premise_freq: num(1, "prem_freq")?,
            hypothesis_freq: num(2, "hyp_freq")?,
            ratio: num(3, "ratio")?,
            class: f[4].parse().map_err(|_| bad("verdict"))?,
            premise_lemma: unescape_field(f[5]),
            hypothesis_lemma: unescape_field(f[6]),
            premise_path: parse_path(f[7]).ok_or_else(|| bad("prem_path"))?,
            hypothesis_path: parse_path(f[8]).ok_or_else(|| bad("hyp_path"))?,
        };
        map.insert(unescape_field(f[0]), verdict);
    }
    Ok(Some(map))
}

// ---------------------------------------------------------------------------
// backends

/// Reads a `hypothesis<TAB>veracity` table with a header row.
pub fn load_veracity_table(path: &Path) -> Result<BTreeMap<String, Veracity>> {
    let text = read_text(path)?;
    let mut rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match rows.next() {
        Some((_, h)) if h.trim_end() == "hypothesis\tveracity" => {}
        _ => return Err(Error::in_file(path, "expected header \"hypothesis\\tveracity\"")),
    }
    let mut table = BTreeMap::new();
    for (i, line) in rows {
        let (h, v) = line
            .trim_end_matches('\r')
            .split_once('\t')
            .ok_or_else(|| Error::in_file(path, format!("line {}: expected 2 columns", i + 1)))?;
        let v: Veracity = v
            .parse()
            .map_err(|_| Error::in_file(path, format!("line {}: bad veracity {v:?}", i + 1)))?;
        table.insert(unescape_field(h), v);
    }
    Ok(table)
}

fn simulator_params(sim: &SimulatorSpec, seed: Seed) -> Result<BiasParams> {
    let params = BiasParams {
        p_entail_given_vtrue: sim.p_entail_given_vtrue,
        p_entail_given_vother: sim.p_entail_given_vother,
        p_entail_given_fwin: sim.p_entail_given_fwin,
        p_entail_given_flose: sim.p_entail_given_flose,
        mode: sim.mode,
        mix_weight: sim.mix_weight,
        veracity_table: match &sim.veracity_table {
            Some(p) => load_veracity_table(p)?,
            None => BTreeMap::new(),
        },
        seed,
    };
    params.validate().map_err(|e| Error::config(e.to_string()))?;
    Ok(params)
}

pub fn build_backend(cfg: &RunConfig, spec: &BackendSpec) -> Result<Box<dyn Backend>> {
    Ok(match spec {
        BackendSpec::Simulator { id, sim } => {
            let seed = Seed(sim.seed.or(cfg.seed).ok_or_else(|| Error::config("seed: required for the simulator backend"))?);
            let params = simulator_params(sim, seed)?;
            let true_rate = sim
                .veracity_true_rate
                .or(if sim.veracity_table.is_none() { Some(0.5) } else { None });
            Box::new(SimulatorBackend::new(id, params, true_rate, seed))
        }
        BackendSpec::Http { id, http } => {
            let inner = ReqwestTransport::new(std::time::Duration::from_secs(http.timeout_secs))?;
            let dir = cfg.cache_dir();
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let transcript = dir.join(format!("{id}.transcript.jsonl"));
            let t = RecordingTransport::new(inner, &transcript, &http.prompt_field)?;
            Box::new(HttpBackend::new(id, http.clone(), Box::new(t))?)
        }
        BackendSpec::Replay { id, transcript, http } => {
            let t = ReplayTransport::load(transcript, &http.prompt_field)?;
            Box::new(HttpBackend::new(id, http.clone(), Box::new(t))?)
        }
    })
}

// ---------------------------------------------------------------------------
// run

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateScore {
    pub template: u8,
    pub auc_norm: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSelection {
    /// "fixed" or "auto".
    pub mode: String,
    pub template: u8,
    pub backend: Option<String>,
    /// "dev_pool" or "dev_split".
    pub dev_source: Option<String>,
    pub dev_samples: usize,
    pub scores: Vec<TemplateScore>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BackendRunSummary {
    pub backend: String,
    pub requests: usize,
    pub cached: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub template: TemplateSelection,
    pub backends: Vec<BackendRunSummary>,
}

struct Failure {
    kind: PromptKind,
    variant: String,
    sample_id: String,
    message: String,
}

type VariantInput = (TaskVariant, Vec<NliSample>, Option<HashMap<String, FrequencyVerdict>>);

struct RunInputs {
    variants: Vec<VariantInput>,
    shots: Option<FewShotBlock>,
}

impl RunInputs {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let mut variants = Vec::new();
        for &v in &cfg.variants {
            variants.push((v, load_variant(cfg, v)?, load_frequencies(cfg, v)?));
        }
        let shots = match cfg.shots {
            ShotsMode::Zero => None,
            ShotsMode::Few4 => Some(files::load_shots(cfg.shots_file.as_deref())?),
        };
        Ok(RunInputs { variants, shots })
    }
}

fn inference_request(cfg: &RunConfig, s: &NliSample, template: PromptTemplate, shots: Option<&FewShotBlock>, f: Option<&FrequencyVerdict>) -> BackendRequest {
    BackendRequest {
        prompt: render_inference_prompt(s, template, shots, cfg.ignore_veracity),
        max_tokens: cfg.max_tokens,
        temperature: cfg.temperature,
        run_id: String::new(),
        hypothesis: s.hypothesis.clone(),
        sample: Some(s.clone()),
        frequency: f.cloned(),
    }
}

/// The dev samples used for template selection: the dev pool when given,
/// otherwise a seeded fraction of the variant-I pairs.
fn dev_samples(cfg: &RunConfig) -> Result<(String, Vec<NliSample>)> {
    let types = files::load_types(cfg.types.as_deref())?;
    if let Some(p) = &cfg.dev_pool {
        return Ok(("dev_pool".into(), files::load_dataset(p, TaskVariant::I, &types)?.samples));
    }
    let seed = Seed(cfg.seed_or_err("automatic template selection")?);
    let base = load_variant(cfg, TaskVariant::I)?;
    let dev = base
        .into_iter()
        .filter(|s| KeyedRng::from_str_key(seed, &["dev_split", &s.pair_id]).next_f64() < cfg.dev_fraction)
        .collect();
    Ok(("dev_split".into(), dev))
}

fn select_template(
    cfg: &RunConfig,
    backend: &dyn Backend,
    cache: &ResponseCache,
    dev: &(String, Vec<NliSample>),
    shots: Option<&FewShotBlock>,
) -> TemplateSelection {
    let mut scores = Vec::new();
    for t in PromptTemplate::ALL {
        let reqs: Vec<BackendRequest> = dev.1.iter().map(|s| inference_request(cfg, s, t, shots, None)).collect();
        let results = query_all(backend, cache, &reqs, cfg.concurrency);
        let mut preds = Vec::new();
        let mut failed = 0;
        for (s, r) in dev.1.iter().zip(results) {
            match r.map(|r| ScoredPrediction::new(s, &r, None, None)) {
                Ok(Ok(p)) => preds.push(p),
                _ => failed += 1,
            }
        }
        let score = match pr_curve(&preds) {
            Ok(c) => TemplateScore {
                template: t.id(),
                auc_norm: Some(c.auc_norm),
                note: (failed > 0).then(|| format!("{failed} failed requests")),
            },
            Err(e) => TemplateScore {
                template: t.id(),
                auc_norm: None,
                note: Some(format!("{e}; {failed} failed requests")),
            },
        };
        scores.push(score);
    }
    let mut best = PromptTemplate::ALL[0].id();
    let mut best_score = f64::NEG_INFINITY;
    for s in &scores {
        if let Some(a) = s.auc_norm {
            if a > best_score {
                best_score = a;
                best = s.template;
            }
        }
    }
    TemplateSelection {
        mode: "auto".into(),
        template: best,
        backend: Some(backend.id().to_string()),
        dev_source: Some(dev.0.clone()),
        dev_samples: dev.1.len(),
        scores,
    }
}

fn prediction_row(s: &NliSample, r: &ModelResponse) -> String {
    let (s_ent, predicted) = match ScoredPrediction::new(s, r, None, None) {
        Ok(p) => (fmt_opt(p.s_ent), p.predicted.as_str()),
        Err(_) => (String::new(), "NoEntail"),
    };
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        escape_field(&s.id),
        s.variant.tag(),
        r.choice.as_str(),
        fmt_opt(r.s_tok),
        s_ent,
        predicted,
        s.gold.as_str(),
        escape_field(&r.raw_text)
    )
}

/// Queries every backend on every configured variant and, unless disabled,
/// on each unique hypothesis for veracity. Responses land in the cache as
/// they arrive, so a rerun only asks for what is missing.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate_run()?;
    let inputs = RunInputs::load(cfg)?;
    let dev = match cfg.template {
        TemplateChoice::Auto => Some(dev_samples(cfg)?),
        TemplateChoice::Fixed(_) => None,
    };

    let mut hypotheses: Vec<&Proposition> = Vec::new();
    let mut seen = BTreeSet::new();
    let all_samples = inputs
        .variants
        .iter()
        .flat_map(|(_, s, _)| s.iter())
        .chain(dev.iter().flat_map(|d| d.1.iter()));
    for s in all_samples {
        if seen.insert(s.hypothesis.render()) {
            hypotheses.push(&s.hypothesis);
        }
    }

    let mut backends = Vec::new();
    for spec in &cfg.backends {
        let mut b = build_backend(cfg, spec)?;
        b.prepare(&hypotheses);
        let cache = ResponseCache::open(&cache_path(cfg, spec.id()))?;
        if cache.skipped_lines() > 0 {
            log::warn!("{}: skipped {} unreadable lines", cache_path(cfg, spec.id()).display(), cache.skipped_lines());
        }
        backends.push((b, cache));
    }

    let selection = match (&cfg.template, &dev) {
        (TemplateChoice::Fixed(t), _) => TemplateSelection {
            mode: "fixed".into(),
            template: t.id(),
            backend: None,
            dev_source: None,
            dev_samples: 0,
            scores: Vec::new(),
        },
        (TemplateChoice::Auto, Some(dev)) => {
            let (b, cache) = &backends[0];
            select_template(cfg, b.as_ref(), cache, dev, inputs.shots.as_ref())
        }
        (TemplateChoice::Auto, None) => unreachable!("dev samples are loaded for auto"),
    };
    let template = PromptTemplate::new(selection.template).expect("valid id");
    let json = serde_json::to_string_pretty(&selection).expect("selection serializes");
    write_file(&cfg.predictions_dir().join(TEMPLATE_SELECTION_FILE), format!("{json}\n").as_bytes())?;

    let shots_vs = files::load_veracity_shots(cfg.veracity_shots_file.as_deref())?;
    let mut summaries = Vec::new();
    let mut over_threshold = Vec::new();
    for (b, cache) in &backends {
        let mut failures: Vec<Failure> = Vec::new();
        let mut summary = BackendRunSummary {
            backend: b.id().to_string(),
            ..BackendRunSummary::default()
        };
        for (v, samples, freqs) in &inputs.variants {
            let reqs: Vec<BackendRequest> = samples
                .iter()
                .map(|s| {
                    let f = freqs.as_ref().and_then(|m| m.get(&s.id));
                    inference_request(cfg, s, template, inputs.shots.as_ref(), f)
                })
                .collect();
            let results = query_all(b.as_ref(), cache, &reqs, cfg.concurrency);
            let mut text = format!("{FORMAT_LINE}\n{PREDICTION_COLUMNS}\n");
            for (s, r) in samples.iter().zip(results) {
                summary.requests += 1;
                match r {
                    Ok(r) => {
                        summary.cached += r.cached as usize;
                        text.push_str(&prediction_row(s, &r));
                    }
                    Err(e) => failures.push(Failure {
                        kind: PromptKind::Inference,
                        variant: v.tag().into(),
                        sample_id: s.id.clone(),
                        message: e.to_string(),
                    }),
                }
            }
            write_file(&predictions_path(cfg, b.id(), *v), text.as_bytes())?;
        }

        if cfg.veracity {
            let unique: Vec<&Proposition> = {
                let mut seen = BTreeSet::new();
                inputs
                    .variants
                    .iter()
                    .flat_map(|(_, s, _)| s.iter())
                    .filter(|s| seen.insert(s.hypothesis.render()))
                    .map(|s| &s.hypothesis)
                    .collect()
            };
            let reqs: Vec<BackendRequest> = unique
                .iter()
                .map(|h| BackendRequest {
                    prompt: render_veracity_prompt(h, &shots_vs),
                    max_tokens: cfg.max_tokens,
                    temperature: cfg.temperature,
                    run_id: String::new(),
                    hypothesis: (*h).clone(),
                    sample: None,
                    frequency: None,
                })
                .collect();
            let results = query_all(b.as_ref(), cache, &reqs, cfg.concurrency);
            let mut text = format!("{FORMAT_LINE}\n{VERACITY_COLUMNS}\n");
            for (h, r) in unique.iter().zip(results) {
                summary.requests += 1;
                let key = h.render();
                match r {
                    Ok(r) => {
                        summary.cached += r.cached as usize;
                        let v = Veracity::from_choice(r.choice).map(Veracity::as_str).unwrap_or("");
                        text.push_str(&format!(
                            "{}\t{}\t{}\t{}\t{}\n",
                            escape_field(&key),
                            r.choice.as_str(),
                            v,
                            fmt_opt(r.s_tok),
                            escape_field(&r.raw_text)
                        ));
                    }
                    Err(e) => failures.push(Failure {
                        kind: PromptKind::Veracity,
                        variant: String::new(),
                        sample_id: key,
                        message: e.to_string(),
                    }),
                }
            }
            write_file(&veracity_path(cfg, b.id()), text.as_bytes())?;
        }

        let mut text = format!("{FORMAT_LINE}\n{FAILURE_COLUMNS}\n");
        for f in &failures {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                f.kind.as_str(),
                f.variant,
                escape_field(&f.sample_id),
                escape_field(&f.message)
            ));
        }
        write_file(&failures_path(cfg, b.id()), text.as_bytes())?;
        summary.failures = failures.len();
        let rate = if summary.requests == 0 { 0.0 } else { summary.failures as f64 / summary.requests as f64 };
        if rate > cfg.max_failure_rate {
            over_threshold.push(format!(
                "backend {}: {} of {} requests failed (max_failure_rate {})",
                b.id(),
                summary.failures,
                summary.requests,
                cfg.max_failure_rate
            ));
        }
        summaries.push(summary);
    }
    if !over_threshold.is_empty() {
        return Err(Error::backend(over_threshold.join("; ")));
    }
    Ok(RunSummary {
        template: selection,
        backends: summaries,
    })
}

/// One line of a predictions file read back for analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub sample_id: String,
    pub choice: ParsedChoice,
    pub s_tok: Option<f64>,
    pub raw_text: String,
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (line, f) in tsv_rows(path, &text, PREDICTION_COLUMNS)? {
        let bad = |field: &str| Error::in_file(path, format!("line {line}: bad {field}"));
        out.push(PredictionRow {
            sample_id: unescape_field(f[0]),
            choice: f[2].parse().map_err(|_| bad("choice"))?,
            s_tok: if f[3].is_empty() { None } else { Some(f[3].parse().map_err(|_| bad("s_tok"))?) },
            raw_text: unescape_field(f[7]),
        });
    }
    Ok(out)
}

/// Veracity judgements keyed by rendered hypothesis; unparsed answers are
/// left out.
pub fn load_veracity(path: &Path) -> Result<BTreeMap<String, Veracity>> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    for (line, f) in tsv_rows(path, &text, VERACITY_COLUMNS)? {
        if f[2].is_empty() {
            continue;
        }
        let v = f[2]
            .parse()
            .map_err(|_| Error::in_file(path, format!("line {line}: bad veracity {:?}", f[2])))?;
        out.insert(unescape_field(f[0]), v);
    }
    Ok(out)
}
