mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use entail_probe::pipeline::{load_predictions, load_veracity};
use tempfile::TempDir;

use common::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// A temp dir holding `data.tsv` (copied or synthesized) and `run.toml`.
fn workspace(data: Option<&[entail_probe_core::NliSample]>, config: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    match data {
        Some(samples) => write_samples(&dir.path().join("data.tsv"), samples),
        None => {
            std::fs::copy(fixture("four_rows.tsv"), dir.path().join("data.tsv")).unwrap();
        }
    }
    let cfg = dir.path().join("run.toml");
    write_config(&cfg, config);
    (dir, cfg)
}

fn stdout(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn count_rows(path: &Path) -> usize {
    // Format line and header precede the rows.
    std::fs::read_to_string(path).unwrap().lines().skip(2).count()
}

const SIM: &str = "[[backend]]\nkind = \"simulator\"\nid = \"sim\"\np_entail_given_vtrue = 0.8\np_entail_given_vother = 0.2\n";

#[test]
fn typed_args_on_four_rows() {
    let (dir, cfg) = workspace(None, "dataset = \"data.tsv\"\noutput_dir = \"out\"\nvariants = [\"I_TA\"]\n");
    let out = cli_ok(&["transform", "--config", cfg.to_str().unwrap()]);
    assert!(stdout(&out).contains("I_TA\t4 samples\t0 excluded"), "{}", stdout(&out));
    let data = dir.path().join("out/data");
    assert_eq!(count_rows(&data.join("I_TA.tsv")), 4);
    assert_eq!(count_rows(&data.join("I_TA.exclusions.tsv")), 0);
    let text = std::fs::read_to_string(data.join("I_TA.tsv")).unwrap();
    assert!(text.contains("\tperson X\tperson\tlocation Y\tlocation\t"), "{text}");
    assert!(text.contains("\tlocation X\tlocation\tfood Y\tfood\t"), "{text}");
    assert!(!text.contains("George Bush"));
}

#[test]
fn random_premise_without_dev_pool_is_a_config_error() {
    let (_dir, cfg) = workspace(None, "dataset = \"data.tsv\"\noutput_dir = \"out\"\nseed = 1\nvariants = [\"I_RP\"]\n");
    let out = cli(&["transform", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dev_pool"));
}

#[test]
fn malformed_dataset_is_a_data_error() {
    let (dir, cfg) = workspace(None, "dataset = \"data.tsv\"\noutput_dir = \"out\"\n");
    let mut text = std::fs::read_to_string(dir.path().join("data.tsv")).unwrap();
    text.push_str("p3-f\tp3\tforward\t{X} likes {Y}\tAnn\tperson\n");
    std::fs::write(dir.path().join("data.tsv"), text).unwrap();
    let out = cli(&["transform", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_key_and_unknown_flag_exit_2() {
    let (_dir, cfg) = workspace(None, "dataset = \"data.tsv\"\nno_such_key = 1\n");
    assert_eq!(cli(&["transform", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cli(&["transform", "--config", cfg.to_str().unwrap(), "--bogus"]).status.code(), Some(2));
    assert_eq!(cli(&["transform"]).status.code(), Some(2));
}

#[test]
fn help_lists_the_overrides() {
    let text = stdout(&cli_ok(&["run", "--help"]));
    for flag in [
        "--config",
        "--dataset",
        "--dev-pool",
        "--entity-index",
        "--ngram-index",
        "--output-dir",
        "--seed",
        "--variants",
        "--band",
        "--template",
        "--shots",
        "--ignore-veracity",
        "--no-veracity",
        "--concurrency",
        "--backend",
    ] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    let top = stdout(&cli_ok(&["--help"]));
    for cmd in ["transform", "freq", "run", "analyze", "all"] {
        assert!(top.contains(cmd));
    }
}

#[test]
fn transform_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(&dir.path().join("data.tsv"), &synth_samples(30, 3, "d"));
    write_samples(&dir.path().join("dev.tsv"), &synth_samples(40, 4, "dev"));
    write_entity_index(&dir.path().join("entities.tsv"));
    let cfg = dir.path().join("t.toml");
    write_config(
        &cfg,
        "dataset = \"data.tsv\"\ndev_pool = \"dev.tsv\"\nentity_index = \"entities.tsv\"\nseed = 11\n\
         variants = [\"I_RP\", \"I_RA_high\", \"I_RP_TA\"]\n",
    );
    let run = |out: &str, seed: &str| {
        let o = dir.path().join(out);
        cli_ok(&["transform", "--config", cfg.to_str().unwrap(), "--output-dir", o.to_str().unwrap(), "--seed", seed]);
        dir_digests(&o.join("data"))
    };
    let a = run("a", "11");
    assert_eq!(a, run("b", "11"));
    let c = run("c", "12");
    assert_eq!(a["I.tsv"], c["I.tsv"]);
    assert_ne!(a["I_RP.tsv"], c["I_RP.tsv"]);
}

#[test]
fn band_flag_selects_one_random_argument_band() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(&dir.path().join("data.tsv"), &synth_samples(5, 3, "d"));
    write_entity_index(&dir.path().join("entities.tsv"));
    let cfg = dir.path().join("t.toml");
    write_config(&cfg, "dataset = \"data.tsv\"\nentity_index = \"entities.tsv\"\nseed = 2\nvariants = [\"I_RA_high\"]\n");
    cli_ok(&["transform", "--config", cfg.to_str().unwrap(), "--band", "low"]);
    let data = dir.path().join("entail-probe-out/data");
    assert!(data.join("I_RA_low.tsv").exists());
    assert!(!data.join("I_RA_high.tsv").exists());
}

#[test]
fn simulator_run_writes_every_stage() {
    let (dir, cfg) = workspace(
        Some(&synth_samples(50, 5, "s")),
        &format!("dataset = \"data.tsv\"\noutput_dir = \"out\"\nseed = 9\nvariants = [\"I\"]\ntemplate = 1\n\n{SIM}"),
    );
    cli_ok(&["all", "--config", cfg.to_str().unwrap()]);
    let out = dir.path().join("out");
    let preds = load_predictions(&out.join("predictions/sim/I.tsv")).unwrap();
    assert_eq!(preds.len(), 100);
    assert_eq!(count_rows(&out.join("predictions/sim/failures.tsv")), 0);

    // One veracity row per distinct hypothesis, not per sample.
    let hyps: BTreeSet<String> = synth_samples(50, 5, "s").iter().map(|s| s.hypothesis.render()).collect();
    let ver = load_veracity(&out.join("predictions/sim/veracity.tsv")).unwrap();
    assert_eq!(ver.len(), hyps.len());
    assert_eq!(count_rows(&out.join("predictions/sim/veracity.tsv")), hyps.len());

    for f in ["conditional_veracity.tsv", "conditional_frequency.tsv", "entity_results.tsv", "consistency_auc.tsv"] {
        assert!(out.join("report").join(f).exists(), "{f} missing");
    }
    assert!(out.join("report/curves/sim/I.tsv").exists());
    assert!(out.join("predictions/template_selection.json").exists());
}

#[test]
fn analyze_is_idempotent_and_manifest_lists_inputs() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(&dir.path().join("data.tsv"), &synth_samples(20, 6, "m"));
    write_samples(&dir.path().join("dev.tsv"), &synth_samples(20, 7, "dev"));
    write_entity_index(&dir.path().join("entities.tsv"));
    write_ngrams(&dir.path().join("dump.tsv"), &dir.path().join("totals.tsv"), |_, i| 10u64.pow(i as u32 + 1));
    let cfg = dir.path().join("run.toml");
    write_config(
        &cfg,
        &format!(
            "dataset = \"data.tsv\"\ndev_pool = \"dev.tsv\"\nentity_index = \"entities.tsv\"\nseed = 4\noutput_dir = \"out\"\n\
             variants = [\"I\", \"I_RP\", \"I_RA_low\"]\nyears = [2000, 2001]\n\n\
             [ngram]\ndump = \"dump.tsv\"\ntotals = \"totals.tsv\"\n\n{SIM}"
        ),
    );
    let c = cfg.to_str().unwrap();
    cli_ok(&["all", "--config", c]);
    let report = dir.path().join("out/report");
    let first = dir_digests(&report);
    std::fs::write(report.join("stale.txt"), "left over").unwrap();
    cli_ok(&["analyze", "--config", c]);
    assert_eq!(first, dir_digests(&report));

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report.join("manifest.json")).unwrap()).unwrap();
    let inputs = manifest["inputs"].as_array().unwrap();
    let digest_of = |role: &str, path: &str| {
        inputs
            .iter()
            .find(|i| i["role"] == role && i["path"] == path)
            .unwrap_or_else(|| panic!("no {role} input {path}"))["sha256"]
            .as_str()
            .unwrap()
            .to_string()
    };
    assert_eq!(digest_of("config", "run.toml"), sha256_file(&cfg));
    assert_eq!(digest_of("dataset", "data.tsv"), sha256_file(&dir.path().join("data.tsv")));
    assert_eq!(digest_of("dev_pool", "dev.tsv"), sha256_file(&dir.path().join("dev.tsv")));
    assert_eq!(digest_of("entity_index", "entities.tsv"), sha256_file(&dir.path().join("entities.tsv")));
    assert_eq!(
        digest_of("ngram_index", "freq/ngrams.ngix"),
        sha256_file(&dir.path().join("out/freq/ngrams.ngix"))
    );
    for v in ["I", "I_RP", "I_RA_low"] {
        digest_of("data", &format!("data/{v}.tsv"));
    }
    let text = std::fs::read_to_string(report.join("manifest.json")).unwrap();
    assert!(!text.contains(dir.path().to_str().unwrap()), "manifest holds an absolute temp path");
    assert_eq!(manifest["backends"][0]["cache_file"], "cache/sim.jsonl");
}

#[test]
fn frequency_stage_classifies_by_margin() {
    let (dir, cfg) = workspace(
        None,
        "dataset = \"data.tsv\"\noutput_dir = \"out\"\nyears = [2000, 2001]\n\n[ngram]\ndump = \"dump.tsv\"\ntotals = \"totals.tsv\"\n",
    );
    // Governor 10 against politician 100 clears the margin both ways;
    // 30 against 60 does not.
    std::fs::write(
        dir.path().join("dump.tsv"),
        "be governor of\t2000\t10\nbe politician from\t2000\t100\nexport tons of\t2000\t30\nexport\t2000\t60\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("totals.tsv"), "2000\t1000\n2001\t1000\n").unwrap();
    let c = cfg.to_str().unwrap();
    cli_ok(&["transform", "--config", c]);
    cli_ok(&["freq", "ingest", "--config", c]);
    let out = stdout(&cli_ok(&["freq", "classify", "--config", c]));
    assert!(out.contains("I\tWin 1\tLose 1\tDraw 2"), "{out}");
}

#[test]
fn unreadable_transcript_is_a_data_error() {
    let (_dir, cfg) = workspace(
        None,
        "dataset = \"data.tsv\"\noutput_dir = \"out\"\ntemplate = 1\n\n[[backend]]\nkind = \"replay\"\nid = \"r\"\ntranscript = \"data.tsv\"\n",
    );
    let out = cli(&["all", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn majority_subsets_follow_a_brute_force_vote() {
    use entail_probe_core::Veracity;

    let samples = synth_samples(5, 12, "mv");
    let mut config = String::from("dataset = \"data.tsv\"\noutput_dir = \"out\"\nseed = 3\ntemplate = 1\n");
    for (id, rate, seed) in [("a", 0.2, 1), ("b", 0.5, 2), ("c", 0.8, 3)] {
        config.push_str(&format!(
            "\n[[backend]]\nkind = \"simulator\"\nid = \"{id}\"\nseed = {seed}\nveracity_true_rate = {rate}\n"
        ));
    }
    let (dir, cfg) = workspace(Some(&samples), &config);
    cli_ok(&["all", "--config", cfg.to_str().unwrap()]);
    let out = dir.path().join("out");

    let tables: Vec<_> = ["a", "b", "c"]
        .iter()
        .map(|id| load_veracity(&out.join(format!("predictions/{id}/veracity.tsv"))).unwrap())
        .collect();
    assert!(tables[0] != tables[1] || tables[1] != tables[2], "backends never disagree");

    let mut consistent = 0;
    for s in &samples {
        let h = s.hypothesis.render();
        let trues = tables.iter().filter(|t| t.get(&h) == Some(&Veracity::True)).count();
        let falses = tables.iter().filter(|t| t.get(&h) == Some(&Veracity::False)).count();
        let majority_true = trues >= 2;
        assert!(trues + falses <= 3);
        if majority_true == (s.gold == entail_probe_core::Label::Entail) {
            consistent += 1;
        }
    }

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report/report.json")).unwrap()).unwrap();
    assert_eq!(report["majority"]["backends"], serde_json::json!(["a", "b", "c"]));
    for id in ["a", "b", "c"] {
        let n_of = |subset: &str| {
            report["majority"]["consistency"]
                .as_array()
                .unwrap()
                .iter()
                .find(|r| r["v_source"] == format!("majority:{id}") && r["subset"] == subset)
                .unwrap()["n"]
                .as_u64()
                .unwrap()
        };
        assert_eq!(n_of("V_C"), consistent);
        assert_eq!(n_of("V_A"), samples.len() as u64 - consistent);
    }
}

#[test]
fn suppressed_entailment_on_high_band_gives_negative_delta_recall() {
    use entail_probe_core::format::parse_dataset;
    use entail_probe_core::{TaskVariant, TypeSet};

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_samples(&d.join("data.tsv"), &synth_samples(10, 21, "dr"));
    write_entity_index(&d.join("entities.tsv"));
    let cfg = d.join("run.toml");
    write_config(
        &cfg,
        "dataset = \"data.tsv\"\nentity_index = \"entities.tsv\"\noutput_dir = \"out\"\nseed = 6\n\
         variants = [\"I\", \"I_RA_high\"]\ntemplate = 1\n\n\
         [[backend]]\nkind = \"simulator\"\nid = \"sim\"\nveracity_table = \"table.tsv\"\n\
         p_entail_given_vtrue = 1.0\np_entail_given_vother = 0.0\n",
    );
    let c = cfg.to_str().unwrap();
    cli_ok(&["transform", "--config", c]);

    // Original hypotheses are judged true, high-band rewrites false, so the
    // simulator answers Entailment on I and never on I_RA_high.
    let mut table = String::from("hypothesis\tveracity\n");
    for (v, verdict) in [(TaskVariant::I, "True"), (TaskVariant::RandomArgsHigh, "False")] {
        let text = std::fs::read_to_string(d.join(format!("out/data/{}.tsv", v.tag()))).unwrap();
        let samples = parse_dataset(&text, v, &TypeSet::default()).unwrap().samples;
        assert_eq!(samples.len(), 20);
        let hyps: BTreeSet<String> = samples.iter().map(|s| s.hypothesis.render()).collect();
        for h in hyps {
            table.push_str(&format!("{h}\t{verdict}\n"));
        }
    }
    std::fs::write(d.join("table.tsv"), table).unwrap();
    cli_ok(&["run", "--config", c]);
    cli_ok(&["analyze", "--config", c]);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("out/report/report.json")).unwrap()).unwrap();
    let rows = report["backends"][0]["recall"].as_array().unwrap();
    let row = |tag: &str| rows.iter().find(|r| r["variant"] == tag).unwrap();
    // Hand counts: I has tp 10, fp 10; I_RA_high has fn 10, tn 10.
    let base = &row("I")["metrics"];
    assert_eq!((base["tp"].as_u64(), base["fp"].as_u64()), (Some(10), Some(10)));
    assert_eq!(base["recall"], 1.0);
    assert_eq!(base["precision"], 0.5);
    let high = row("I_RA_high");
    assert_eq!((high["metrics"]["fn_"].as_u64(), high["metrics"]["tn"].as_u64()), (Some(10), Some(10)));
    assert_eq!(high["metrics"]["recall"], 0.0);
    assert!(high["metrics"]["precision"].is_null());
    assert_eq!(high["delta_recall"], -1.0);
}
