//! Run configuration: a TOML file plus command-line overrides.
//!
//! Relative paths in the file resolve against the file's directory; paths
//! given as flags resolve against the working directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use entail_probe_core::freq::LookupMode;
use entail_probe_core::prompt::PromptTemplate;
use entail_probe_core::simulate::BiasMode;
use entail_probe_core::{TaskVariant, YearRange};
use serde::{Deserialize, Serialize};

use crate::backend::HttpBackendConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TemplateChoice {
    Auto,
    Fixed(PromptTemplate),
}

impl FromStr for TemplateChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(TemplateChoice::Auto);
        }
        s.trim()
            .parse::<u8>()
            .ok()
            .and_then(PromptTemplate::new)
            .map(TemplateChoice::Fixed)
            .ok_or_else(|| format!("template must be \"auto\" or 1-4, got {s:?}"))
    }
}

impl<'de> Deserialize<'de> for TemplateChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u8),
            S(String),
        }
        let s = match Raw::deserialize(d)? {
            Raw::N(n) => n.to_string(),
            Raw::S(s) => s,
        };
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotsMode {
    Zero,
    #[default]
    Few4,
}

impl FromStr for ShotsMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "zero" => Ok(ShotsMode::Zero),
            "few4" | "few" => Ok(ShotsMode::Few4),
            other => Err(format!("shots must be \"zero\" or \"few4\", got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LookupModeSetting {
    #[default]
    PhraseThenHead,
    PhraseOnly,
    HeadOnly,
}

impl From<LookupModeSetting> for LookupMode {
    fn from(m: LookupModeSetting) -> Self {
        match m {
            LookupModeSetting::PhraseThenHead => LookupMode::PhraseThenHead,
            LookupModeSetting::PhraseOnly => LookupMode::PhraseOnly,
            LookupModeSetting::HeadOnly => LookupMode::HeadOnly,
        }
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorSpec {
    #[serde(default = "half")]
    pub p_entail_given_vtrue: f64,
    #[serde(default = "half")]
    pub p_entail_given_vother: f64,
    #[serde(default = "half")]
    pub p_entail_given_fwin: f64,
    #[serde(default = "half")]
    pub p_entail_given_flose: f64,
    #[serde(default)]
    pub mode: BiasMode,
    #[serde(default = "half")]
    pub mix_weight: f64,
    /// Defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// TSV of `hypothesis, veracity` rows.
    #[serde(default)]
    pub veracity_table: Option<PathBuf>,
    /// Probability of True for hypotheses the table does not cover.
    #[serde(default)]
    pub veracity_true_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Simulator {
        id: String,
        #[serde(flatten)]
        sim: SimulatorSpec,
    },
    Http {
        id: String,
        #[serde(flatten)]
        http: HttpBackendConfig,
    },
    Replay {
        id: String,
        transcript: PathBuf,
        #[serde(flatten)]
        http: HttpBackendConfig,
    },
}

impl BackendSpec {
    pub fn id(&self) -> &str {
        match self {
            BackendSpec::Simulator { id, .. } | BackendSpec::Http { id, .. } | BackendSpec::Replay { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgramSources {
    pub dump: PathBuf,
    pub totals: PathBuf,
}

/// The file as written by the user.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<PathBuf>,
    pub dev_pool: Option<PathBuf>,
    pub entity_index: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub ngram_index: Option<PathBuf>,
    pub ngram: Option<NgramSources>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variants: Option<Vec<String>>,
    pub template: Option<TemplateChoice>,
    pub shots: Option<ShotsMode>,
    pub shots_file: Option<PathBuf>,
    pub veracity_shots_file: Option<PathBuf>,
    pub ignore_veracity: Option<bool>,
    pub veracity: Option<bool>,
    pub max_tokens: Option<u32>,
    pub temperature: Option<f64>,
    pub concurrency: Option<usize>,
    pub max_failure_rate: Option<f64>,
    pub years: Option<[u16; 2]>,
    pub lookup_mode: Option<LookupModeSetting>,
    pub dev_fraction: Option<f64>,
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendSpec>,
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub dev_pool: Option<PathBuf>,
    pub entity_index: Option<PathBuf>,
    pub ngram_index: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variants: Option<Vec<String>>,
    pub template: Option<TemplateChoice>,
    pub shots: Option<ShotsMode>,
    pub ignore_veracity: bool,
    pub no_veracity: bool,
    pub concurrency: Option<usize>,
    pub backends: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub config_path: PathBuf,
    pub dataset: Option<PathBuf>,
    pub dev_pool: Option<PathBuf>,
    pub entity_index: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub ngram_index: Option<PathBuf>,
    pub ngram: Option<NgramSources>,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub variants: Vec<TaskVariant>,
    pub template: TemplateChoice,
    pub shots: ShotsMode,
    pub shots_file: Option<PathBuf>,
    pub veracity_shots_file: Option<PathBuf>,
    pub ignore_veracity: bool,
    pub veracity: bool,
    pub max_tokens: u32,
    pub temperature: f64,
    pub concurrency: usize,
    pub max_failure_rate: f64,
    pub years: YearRange,
    pub lookup_mode: LookupModeSetting,
    pub dev_fraction: f64,
    pub backends: Vec<BackendSpec>,
}

fn parse_variants(names: &[String]) -> Result<Vec<TaskVariant>> {
    let mut out: Vec<TaskVariant> = Vec::new();
    for n in names {
        let v = TaskVariant::from_str(n).map_err(|_| {
            let known: Vec<&str> = TaskVariant::ALL.iter().map(|v| v.tag()).collect();
            Error::config(format!("variants: unknown variant {n:?} (known: {})", known.join(", ")))
        })?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out.sort();
    Ok(out)
}

impl RunConfig {
    pub fn load(path: &Path, overrides: Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let file: ConfigFile =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_file(file, path, base, overrides)
    }

    pub fn from_file(file: ConfigFile, path: &Path, base: &Path, o: Overrides) -> Result<Self> {
        let rel = |p: Option<PathBuf>| p.map(|p| base.join(p));
        let years = file.years.unwrap_or([YearRange::DEFAULT.first, YearRange::DEFAULT.last]);
        if years[0] > years[1] {
            return Err(Error::config(format!("years: {} is after {}", years[0], years[1])));
        }
        let mut backends = file.backends;
        for b in &mut backends {
            match b {
                BackendSpec::Simulator { sim, .. } => sim.veracity_table = rel(sim.veracity_table.take()),
                BackendSpec::Replay { transcript, .. } => *transcript = base.join(&*transcript),
                BackendSpec::Http { .. } => {}
            }
        }
        if let Some(keep) = &o.backends {
            for id in keep {
                if !backends.iter().any(|b| b.id() == id) {
                    return Err(Error::config(format!("backend: no backend with id {id:?}")));
                }
            }
            backends.retain(|b| keep.iter().any(|k| k == b.id()));
        }
        let variant_names = o
            .variants
            .or(file.variants)
            .unwrap_or_else(|| vec![TaskVariant::I.tag().to_string()]);
        let cfg = RunConfig {
            config_path: path.to_path_buf(),
            dataset: o.dataset.or(rel(file.dataset)),
            dev_pool: o.dev_pool.or(rel(file.dev_pool)),
            entity_index: o.entity_index.or(rel(file.entity_index)),
            types: rel(file.types),
            ngram_index: o.ngram_index.or(rel(file.ngram_index)),
            ngram: file.ngram.map(|n| NgramSources {
                dump: base.join(n.dump),
                totals: base.join(n.totals),
            }),
            output_dir: o
                .output_dir
                .or(rel(file.output_dir))
                .unwrap_or_else(|| base.join("entail-probe-out")),
            seed: o.seed.or(file.seed),
            variants: parse_variants(&variant_names)?,
            template: o.template.or(file.template).unwrap_or(TemplateChoice::Auto),
            shots: o.shots.or(file.shots).unwrap_or_default(),
            shots_file: rel(file.shots_file),
            veracity_shots_file: rel(file.veracity_shots_file),
            ignore_veracity: o.ignore_veracity || file.ignore_veracity.unwrap_or(false),
            veracity: !o.no_veracity && file.veracity.unwrap_or(true),
            max_tokens: file.max_tokens.unwrap_or(16),
            temperature: file.temperature.unwrap_or(0.0),
            concurrency: o.concurrency.or(file.concurrency).unwrap_or(4),
            max_failure_rate: file.max_failure_rate.unwrap_or(0.05),
            years: YearRange {
                first: years[0],
                last: years[1],
            },
            lookup_mode: file.lookup_mode.unwrap_or_default(),
            dev_fraction: file.dev_fraction.unwrap_or(0.2),
            backends,
        };
        cfg.validate_common()?;
        Ok(cfg)
    }

    fn validate_common(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::config("temperature: must be >= 0"));
        }
        if self.concurrency == 0 {
            return Err(Error::config("concurrency: must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::config("max_failure_rate: must be in [0, 1]"));
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction <= 1.0) {
            return Err(Error::config("dev_fraction: must be in (0, 1]"));
        }
        let mut ids: Vec<&str> = self.backends.iter().map(BackendSpec::id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config(format!("backend: duplicate id {:?}", w[0])));
        }
        for id in &ids {
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(Error::config(format!("backend: id {id:?} must be non-empty [A-Za-z0-9_-]")));
            }
        }
        for (field, p) in [
            ("types", &self.types),
            ("shots_file", &self.shots_file),
            ("veracity_shots_file", &self.veracity_shots_file),
        ] {
            require_existing(field, p.as_deref())?;
        }
        Ok(())
    }

    pub fn seed_or_err(&self, what: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config(format!("seed: required for {what}")))
    }

    /// Checks what the transform stage needs.
    pub fn validate_transform(&self) -> Result<()> {
        let dataset = self
            .dataset
            .as_deref()
            .ok_or_else(|| Error::config("dataset: not set"))?;
        require_existing("dataset", Some(dataset))?;
        let needs_pool = self
            .variants
            .iter()
            .any(|v| matches!(v, TaskVariant::RandomPremise | TaskVariant::RandomPremiseTypedArgs));
        if needs_pool {
            let p = self
                .dev_pool
                .as_deref()
                .ok_or_else(|| Error::config("dev_pool: required for I_RP and I_RP_TA"))?;
            require_existing("dev_pool", Some(p))?;
        }
        let needs_index = self
            .variants
            .iter()
            .any(|v| matches!(v, TaskVariant::RandomArgsLow | TaskVariant::RandomArgsHigh));
        if needs_index {
            let p = self
                .entity_index
                .as_deref()
                .ok_or_else(|| Error::config("entity_index: required for I_RA_low and I_RA_high"))?;
            require_existing("entity_index", Some(p))?;
        }
        if self.variants.iter().any(|v| {
            !matches!(v, TaskVariant::I | TaskVariant::TypedArgs)
        }) {
            self.seed_or_err("random transformations")?;
        }
        Ok(())
    }

    pub fn validate_run(&self) -> Result<()> {
        if self.backends.is_empty() {
            return Err(Error::config("backend: at least one backend is required"));
        }
        for b in &self.backends {
            match b {
                BackendSpec::Simulator { sim, .. } => {
                    if sim.seed.is_none() {
                        self.seed_or_err("the simulator backend")?;
                    }
                    require_existing("veracity_table", sim.veracity_table.as_deref())?;
                    if let Some(r) = sim.veracity_true_rate {
                        if !(0.0..=1.0).contains(&r) {
                            return Err(Error::config("veracity_true_rate: must be in [0, 1]"));
                        }
                    }
                }
                BackendSpec::Http { id, http } => {
                    if http.base_url.is_empty() {
                        return Err(Error::config(format!("backend {id}: base_url is required")));
                    }
                }
                BackendSpec::Replay { transcript, .. } => require_existing("transcript", Some(transcript))?,
            }
        }
        if matches!(self.template, TemplateChoice::Auto) {
            self.seed_or_err("automatic template selection")?;
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    pub fn freq_dir(&self) -> PathBuf {
        self.output_dir.join("freq")
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.output_dir.join("predictions")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output_dir.join("cache")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.join("report")
    }

    /// The configured index, or the one `freq ingest` writes.
    pub fn effective_ngram_index(&self) -> PathBuf {
        self.ngram_index
            .clone()
            .unwrap_or_else(|| self.freq_dir().join("ngrams.ngix"))
    }
}

fn require_existing(field: &str, p: Option<&Path>) -> Result<()> {
    match p {
        Some(p) if !p.exists() => Err(Error::config(format!("{field}: {} does not exist", p.display()))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, o: Overrides) -> Result<RunConfig> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        RunConfig::from_file(file, Path::new("/cfg/run.toml"), Path::new("/cfg"), o)
    }

    #[test]
    fn defaults_and_relative_paths() {
        let c = parse("dataset = \"d.tsv\"\nseed = 3\n", Overrides::default()).unwrap();
        assert_eq!(c.dataset.as_deref(), Some(Path::new("/cfg/d.tsv")));
        assert_eq!(c.variants, [TaskVariant::I]);
        assert_eq!(c.template, TemplateChoice::Auto);
        assert_eq!(c.shots, ShotsMode::Few4);
        assert_eq!(c.output_dir, Path::new("/cfg/entail-probe-out"));
        assert!(c.veracity);
    }

    #[test]
    fn flags_win() {
        let o = Overrides {
            seed: Some(9),
            template: Some(TemplateChoice::Fixed(PromptTemplate::new(2).unwrap())),
            variants: Some(vec!["I_TA".into(), "I".into()]),
            output_dir: Some(PathBuf::from("rel-out")),
            ..Default::default()
        };
        let c = parse("seed = 3\ntemplate = \"auto\"\nvariants = [\"I_RP\"]\n", o).unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.template, TemplateChoice::Fixed(PromptTemplate::new(2).unwrap()));
        assert_eq!(c.variants, [TaskVariant::I, TaskVariant::TypedArgs]);
        assert_eq!(c.output_dir, Path::new("rel-out"));
    }

    #[test]
    fn backends_parse() {
        let text = r#"
seed = 1
[[backend]]
id = "sim"
kind = "simulator"
p_entail_given_vtrue = 0.9
mode = "veracity_only"

[[backend]]
id = "remote"
kind = "http"
base_url = "http://localhost:1/v1"
auth_env = "API_KEY"
text_pointer = "/choices/0/text"
body = { model = "m" }
"#;
        let c = parse(text, Overrides::default()).unwrap();
        assert_eq!(c.backends.len(), 2);
        match &c.backends[0] {
            BackendSpec::Simulator { sim, .. } => {
                assert_eq!(sim.p_entail_given_vtrue, 0.9);
                assert_eq!(sim.p_entail_given_vother, 0.5);
            }
            other => panic!("{other:?}"),
        }
        match &c.backends[1] {
            BackendSpec::Http { http, .. } => {
                assert_eq!(http.text_pointer, "/choices/0/text");
                assert_eq!(http.body["model"], "m");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_errors() {
        assert!(parse("bogus = 1\n", Overrides::default()).is_err());
        assert!(parse("variants = [\"I_XX\"]\n", Overrides::default()).is_err());
        assert!(parse("template = 7\n", Overrides::default()).is_err());
        let c = parse("dataset = \"d.tsv\"\nvariants = [\"I_RP\"]\n", Overrides::default()).unwrap();
        let e = c.validate_transform().unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
