use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use entail_probe::config::{Overrides, RunConfig, ShotsMode, TemplateChoice};
use entail_probe::{pipeline, report, Result};
use entail_probe_core::TaskVariant;

/// Directional-entailment probing harness.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 backend
/// failure rate above `max_failure_rate`.
#[derive(Parser)]
#[command(name = "entail-probe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the original dataset and every configured variant to data/.
    Transform(Common),
    /// Build the n-gram index or classify samples by predicate frequency.
    Freq {
        #[command(subcommand)]
        action: FreqAction,
    },
    /// Query every backend and write predictions/.
    Run(Common),
    /// Build tables, curves, report.json and manifest.json in report/.
    Analyze(Common),
    /// transform, freq (when an index or dump is available), run, analyze.
    All(Common),
}

#[derive(Subcommand)]
enum FreqAction {
    /// Ingest the configured n-gram dump into freq/ngrams.ngix.
    Ingest(Common),
    /// Write freq/<variant>.tsv with Win/Lose/Draw verdicts.
    Classify(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum BandArg {
    Low,
    High,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dataset TSV (overrides `dataset`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Dev dataset used as the premise pool and for template selection.
    #[arg(long)]
    dev_pool: Option<PathBuf>,
    /// Entity frequency index TSV.
    #[arg(long)]
    entity_index: Option<PathBuf>,
    /// Binary n-gram index.
    #[arg(long)]
    ngram_index: Option<PathBuf>,
    /// Directory that receives every output.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated variants: I, I_RP, I_TA, I_RA_low, I_RA_high, I_RP_TA.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    /// Entity band for random-argument variants; replaces any I_RA variant.
    #[arg(long, value_enum)]
    band: Option<BandArg>,
    /// Prompt template: 1-4 or "auto".
    #[arg(long)]
    template: Option<TemplateChoice>,
    /// zero or few4.
    #[arg(long)]
    shots: Option<ShotsMode>,
    /// Use the instruction to ignore the veracity of the hypothesis.
    #[arg(long)]
    ignore_veracity: bool,
    /// Skip the hypothesis-only veracity queries.
    #[arg(long)]
    no_veracity: bool,
    /// Maximum concurrent backend requests.
    #[arg(long)]
    concurrency: Option<usize>,
    /// Restrict to these backend ids (repeatable).
    #[arg(long = "backend")]
    backends: Vec<String>,
}

impl Common {
    fn load(self) -> Result<RunConfig> {
        let overrides = Overrides {
            dataset: self.dataset,
            dev_pool: self.dev_pool,
            entity_index: self.entity_index,
            ngram_index: self.ngram_index,
            output_dir: self.output_dir,
            seed: self.seed,
            variants: self.variants,
            template: self.template,
            shots: self.shots,
            ignore_veracity: self.ignore_veracity,
            no_veracity: self.no_veracity,
            concurrency: self.concurrency,
            backends: (!self.backends.is_empty()).then_some(self.backends),
        };
        let mut cfg = RunConfig::load(&self.config, overrides)?;
        if let Some(band) = self.band {
            cfg.variants
                .retain(|v| !matches!(v, TaskVariant::RandomArgsLow | TaskVariant::RandomArgsHigh));
            cfg.variants.push(match band {
                BandArg::Low => TaskVariant::RandomArgsLow,
                BandArg::High => TaskVariant::RandomArgsHigh,
            });
            cfg.variants.sort();
        }
        Ok(cfg)
    }
}

fn transform(cfg: &RunConfig) -> Result<()> {
    for c in pipeline::transform(cfg)? {
        println!("{}\t{} samples\t{} excluded", c.variant.tag(), c.samples, c.excluded);
    }
    Ok(())
}

fn ingest(cfg: &RunConfig) -> Result<()> {
    let r = pipeline::freq_ingest(cfg)?;
    println!(
        "ingested {} rows into {} phrases ({} malformed, {} outside the year span)",
        r.rows, r.phrases, r.malformed, r.outside_span
    );
    Ok(())
}

fn classify(cfg: &RunConfig) -> Result<()> {
    for c in pipeline::freq_classify(cfg)? {
        let tag = c.variant.map(TaskVariant::tag).unwrap_or("");
        println!("{tag}\tWin {}\tLose {}\tDraw {}", c.win, c.lose, c.draw);
    }
    Ok(())
}

fn run(cfg: &RunConfig) -> Result<()> {
    let s = pipeline::run(cfg)?;
    println!("template {} ({})", s.template.template, s.template.mode);
    for b in &s.backends {
        println!("{}\t{} requests\t{} cached\t{} failed", b.backend, b.requests, b.cached, b.failures);
    }
    Ok(())
}

fn analyze(cfg: &RunConfig) -> Result<()> {
    let r = report::analyze(cfg)?;
    for b in &r.backends {
        for v in &b.variants {
            let auc = v
                .curve
                .as_ref()
                .map(|c| format!("{:.4}", c.auc_norm))
                .unwrap_or_else(|| "n/a".into());
            println!("{}\t{}\tn={}\tauc_norm={auc}", b.id, v.variant.tag(), v.predictions);
        }
    }
    println!("wrote {}", cfg.report_dir().display());
    Ok(())
}

fn all(cfg: &RunConfig) -> Result<()> {
    transform(cfg)?;
    let index = cfg.effective_ngram_index();
    if cfg.ngram.is_some() && (cfg.ngram_index.is_none() || !index.exists()) {
        ingest(cfg)?;
    }
    if index.exists() {
        classify(cfg)?;
    } else {
        log::info!("no n-gram index; frequency tables will be empty");
    }
    run(cfg)?;
    analyze(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Transform(c) => c.load().and_then(|cfg| transform(&cfg)),
        Command::Freq { action: FreqAction::Ingest(c) } => c.load().and_then(|cfg| ingest(&cfg)),
        Command::Freq { action: FreqAction::Classify(c) } => c.load().and_then(|cfg| classify(&cfg)),
        Command::Run(c) => c.load().and_then(|cfg| run(&cfg)),
        Command::Analyze(c) => c.load().and_then(|cfg| analyze(&cfg)),
        Command::All(c) => c.load().and_then(|cfg| all(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("entail-probe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
