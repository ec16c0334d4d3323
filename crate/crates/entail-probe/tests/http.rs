//! HTTP backend against a local socket server, plus record/replay through
//! the CLI.

mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use entail_probe::backend::{query, Backend, BackendRequest, HttpBackend, HttpBackendConfig, ReqwestTransport};
use entail_probe::cache::ResponseCache;
use entail_probe::pipeline::load_predictions;
use entail_probe_core::prompt::{render_inference_prompt, PromptTemplate};
use entail_probe_core::{Direction, EntityType, Label, NliSample, ParsedChoice, Proposition, TaskVariant};

use common::*;

#[derive(Debug, Clone)]
struct Seen {
    headers: Vec<(String, String)>,
    body: serde_json::Value,
}

struct Reply {
    status: u16,
    headers: Vec<(&'static str, String)>,
    body: String,
}

fn ok(body: serde_json::Value) -> Reply {
    Reply {
        status: 200,
        headers: Vec::new(),
        body: body.to_string(),
    }
}

fn status(code: u16) -> Reply {
    Reply {
        status: code,
        headers: Vec::new(),
        body: format!("{{\"error\": \"status {code}\"}}"),
    }
}

/// Serves one request per connection. `respond` gets the zero-based request
/// number and the parsed request.
fn serve(respond: impl Fn(usize, &Seen) -> Reply + Send + 'static) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/complete", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            loop {
                line.clear();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.trim_end().split_once(':') {
                    headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
                }
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k == "content-length")
                .map(|(_, v)| v.parse().unwrap())
                .unwrap_or(0);
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req = Seen {
                headers,
                body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
            };
            let n = {
                let mut log = log.lock().unwrap();
                log.push(req.clone());
                log.len() - 1
            };
            let reply = respond(n, &req);
            let mut head = format!(
                "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n",
                reply.status,
                reply.body.len()
            );
            for (k, v) in &reply.headers {
                head.push_str(&format!("{k}: {v}\r\n"));
            }
            head.push_str("\r\n");
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(reply.body.as_bytes());
        }
    });
    (url, seen)
}

fn prop(t: &str, x: &str, xt: &str, y: &str, yt: &str) -> Proposition {
    Proposition::new(t, x, EntityType::new(xt).unwrap(), y, EntityType::new(yt).unwrap()).unwrap()
}

fn request() -> BackendRequest {
    let s = NliSample {
        id: "r1".into(),
        pair_id: "r".into(),
        direction: Direction::Forward,
        premise: prop("{X} exports tons of {Y}", "India", "location", "rice", "food"),
        hypothesis: prop("{X} exports {Y}", "India", "location", "rice", "food"),
        gold: Label::Entail,
        variant: TaskVariant::I,
    };
    BackendRequest {
        prompt: render_inference_prompt(&s, PromptTemplate::new(1).unwrap(), None, false),
        max_tokens: 8,
        temperature: 0.0,
        run_id: "test".into(),
        hypothesis: s.hypothesis.clone(),
        sample: Some(s),
        frequency: None,
    }
}

fn backend(url: &str, tweak: impl FnOnce(&mut HttpBackendConfig)) -> HttpBackend {
    let mut cfg = HttpBackendConfig::new(url);
    cfg.initial_backoff_ms = 5;
    cfg.max_backoff_ms = 50;
    cfg.token_prob_pointer = Some("/prob".into());
    tweak(&mut cfg);
    HttpBackend::new("local", cfg, Box::new(ReqwestTransport::new(Duration::from_secs(10)).unwrap())).unwrap()
}

#[test]
fn retries_rate_limits_and_server_errors() {
    let (url, seen) = serve(|n, _| match n {
        0 => Reply {
            headers: vec![("retry-after", "0".into())],
            ..status(429)
        },
        1 => status(503),
        _ => ok(serde_json::json!({"text": " A) Entailment", "prob": 0.8})),
    });
    let b = backend(&url, |_| {});
    let r = query(&b, &ResponseCache::in_memory(), &request()).unwrap();
    assert_eq!(r.choice, ParsedChoice::A);
    assert_eq!(r.s_tok, Some(0.8));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retry_after_sets_the_wait() {
    let (url, _) = serve(|n, _| match n {
        0 => Reply {
            headers: vec![("retry-after", "1".into())],
            ..status(429)
        },
        _ => ok(serde_json::json!({"text": "B"})),
    });
    let b = backend(&url, |c| c.initial_backoff_ms = 1);
    let start = Instant::now();
    let c = b.complete(&request()).unwrap();
    assert!(start.elapsed() >= Duration::from_millis(950), "waited only {:?}", start.elapsed());
    assert_eq!(c.text, "B");
    assert_eq!(c.s_tok, None);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(|_, _| status(400));
    let err = backend(&url, |_| {}).complete(&request()).unwrap_err();
    assert!(err.message.contains("HTTP 400"), "{err}");
    assert_eq!(err.attempts.len(), 1);
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn gives_up_after_max_retries() {
    let (url, seen) = serve(|_, _| status(500));
    let err = backend(&url, |c| c.max_retries = 2).complete(&request()).unwrap_err();
    assert_eq!(err.attempts.len(), 3);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn request_body_and_credential_header() {
    std::env::set_var("ENTAIL_PROBE_HTTP_TEST_KEY", "sekrit-123");
    let (url, seen) = serve(|_, _| ok(serde_json::json!({"choices": [{"text": "C", "lp": (0.91f64).ln()}]})));
    let b = backend(&url, |c| {
        c.auth_env = Some("ENTAIL_PROBE_HTTP_TEST_KEY".into());
        c.body.insert("model".into(), "tiny".into());
        c.text_pointer = "/choices/0/text".into();
        c.token_prob_pointer = None;
        c.token_logprob_pointer = Some("/choices/0/lp".into());
    });
    let c = b.complete(&request()).unwrap();
    assert_eq!(c.text, "C");
    assert!((c.s_tok.unwrap() - 0.91).abs() < 1e-12);
    let req = seen.lock().unwrap()[0].clone();
    assert!(req.headers.contains(&("authorization".into(), "Bearer sekrit-123".into())));
    assert_eq!(req.body["model"], "tiny");
    assert_eq!(req.body["max_tokens"], 8);
    assert_eq!(req.body["temperature"], 0.0);
    assert_eq!(req.body["prompt"], request().prompt.text);
}

fn http_config(dir: &Path, out: &str, backend: &str) -> std::path::PathBuf {
    let cfg = dir.join(format!("{out}.toml"));
    write_config(
        &cfg,
        &format!(
            "dataset = \"data.tsv\"\noutput_dir = \"{out}\"\nvariants = [\"I\"]\ntemplate = 1\n\n[[backend]]\n{backend}\n\
             token_prob_pointer = \"/prob\"\ninitial_backoff_ms = 5\n"
        ),
    );
    cfg
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn cli_records_then_replays_without_storing_the_credential() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("four_rows.tsv"), dir.path().join("data.tsv")).unwrap();
    let (url, seen) = serve(|n, _| if n == 0 { status(502) } else { ok(serde_json::json!({"text": "A", "prob": 0.91})) });

    let live = http_config(
        dir.path(),
        "live",
        &format!("kind = \"http\"\nid = \"local\"\nbase_url = \"{url}\"\nauth_env = \"ENTAIL_PROBE_CLI_KEY\""),
    );
    let out = Command::new(bin())
        .args(["all", "--config", live.to_str().unwrap()])
        .env("ENTAIL_PROBE_CLI_KEY", "do-not-persist-42")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // 4 inference prompts, 4 distinct hypotheses for veracity, one retried 502.
    assert_eq!(seen.lock().unwrap().len(), 9);

    let live_out = dir.path().join("live");
    let preds = load_predictions(&live_out.join("predictions/local/I.tsv")).unwrap();
    assert_eq!(preds.len(), 4);
    assert!(preds.iter().all(|p| p.s_tok == Some(0.91) && p.choice == ParsedChoice::A));
    for entry in walk(&live_out) {
        let text = std::fs::read_to_string(&entry).unwrap_or_default();
        assert!(!text.contains("do-not-persist-42"), "credential leaked into {}", entry.display());
    }

    let transcript = live_out.join("cache/local.transcript.jsonl");
    let replay = http_config(
        dir.path(),
        "replayed",
        &format!("kind = \"replay\"\nid = \"local\"\ntranscript = \"{}\"", transcript.display()),
    );
    cli_ok(&["all", "--config", replay.to_str().unwrap()]);
    let replayed = std::fs::read(dir.path().join("replayed/predictions/local/I.tsv")).unwrap();
    assert_eq!(replayed, std::fs::read(live_out.join("predictions/local/I.tsv")).unwrap());
}

#[test]
fn checked_in_transcript_replays() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("four_rows.tsv"), dir.path().join("data.tsv")).unwrap();
    let cfg = http_config(
        dir.path(),
        "out",
        &format!("kind = \"replay\"\nid = \"recorded\"\ntranscript = \"{}\"", fixture("four_rows.transcript.jsonl").display()),
    );
    cli_ok(&["all", "--config", cfg.to_str().unwrap()]);
    let preds = load_predictions(&dir.path().join("out/predictions/recorded/I.tsv")).unwrap();
    assert_eq!(preds.len(), 4);
    assert!(preds.iter().all(|p| p.s_tok == Some(0.91)));
    let choices: Vec<ParsedChoice> = preds.iter().map(|p| p.choice).collect();
    assert_eq!(choices, [ParsedChoice::A, ParsedChoice::B, ParsedChoice::A, ParsedChoice::C]);
}

#[test]
fn replay_without_a_recording_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("four_rows.tsv"), dir.path().join("data.tsv")).unwrap();
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let cfg = http_config(dir.path(), "out", "kind = \"replay\"\nid = \"r\"\ntranscript = \"empty.jsonl\"");
    let out = cli(&["all", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
