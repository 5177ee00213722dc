//! End-to-end checks of the `entrain` binary: the full pipeline, config
//! precedence, manifests and reruns, determinism, and error reporting.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn entrain(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entrain"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = entrain(dir, args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(dir: &Path, args: &[&str]) -> (Output, serde_json::Value) {
    let out = entrain(dir, args);
    assert!(!out.status.success(), "command {args:?} unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr);
    let report: serde_json::Value = serde_json::from_str(stderr.trim())
        .unwrap_or_else(|e| panic!("stderr is not a JSON error report ({e}): {stderr}"));
    assert!(report.get("error").is_some(), "report lacks error field: {report}");
    (out, report)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap())
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Small synthetic corpus + train settings shared by the pipeline tests.
fn synth_small(dir: &Path, extra: &[&str]) -> (PathBuf, PathBuf) {
    let corpus = dir.join("corpus.jsonl");
    let ann = dir.join("annotations.csv");
    let mut args = vec![
        "synth",
        "--corpus-out",
        corpus.to_str().unwrap(),
        "--annotations-out",
        ann.to_str().unwrap(),
        "--n-sessions",
        "20",
        "--turns-per-session",
        "14",
        "--feature-dim",
        "12",
        "--entrainment",
        "0.9",
        "--consistency",
        "0.3",
        "--noise-sigma",
        "0.3",
        "--seed",
        "1",
    ];
    args.extend_from_slice(extra);
    run_ok(dir, &args);
    (corpus, ann)
}

const SMALL_NET: &[&str] = &[
    "--feat", "12", "--hidden", "16", "--code", "4", "--batch-size", "32",
    "--max-epochs", "8", "--patience", "3",
];

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (corpus, ann) = synth_small(dir, &[]);
    let corpus_digest = sha256(&corpus);

    // train
    let model = dir.join("dr.model");
    let log = dir.join("dr_log.csv");
    let mut args = vec![
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--measure",
        "dr",
        "--model-out",
        model.to_str().unwrap(),
        "--log-out",
        log.to_str().unwrap(),
        "--seed",
        "3",
    ];
    args.extend_from_slice(SMALL_NET);
    run_ok(dir, &args);
    let log_text = fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("stage,epoch,train_loss,val_loss,is_best"));
    assert!(log_text.lines().count() > 2);

    // score
    let scores = dir.join("scores.csv");
    run_ok(
        dir,
        &[
            "score",
            "--corpus",
            corpus.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--output",
            scores.to_str().unwrap(),
        ],
    );
    let score_text = fs::read_to_string(&scores).unwrap();
    // 14 alternating turns -> 13 exchanges, 1 excluded -> 12 per session
    assert_eq!(score_text.lines().count(), 1 + 20 * 12);
    assert!(score_text.starts_with(
        "session_id,task_id,responder,x2_index,score,response_loss,baseline_loss"
    ));

    // shuffle-test
    let summary = dir.join("summary.json");
    let decisions = dir.join("decisions.csv");
    let mut args = vec![
        "shuffle-test",
        "--corpus",
        corpus.to_str().unwrap(),
        "--measure",
        "dr",
        "--runs",
        "2",
        "--seed",
        "3",
        "--summary-out",
        summary.to_str().unwrap(),
        "--decisions-out",
        decisions.to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL_NET);
    run_ok(dir, &args);
    let summary_json = read_json(&summary);
    assert_eq!(summary_json["measure"], "dr");
    assert_eq!(summary_json["runs"], 2);
    assert_eq!(summary_json["per_run"][0]["seed"], 3);
    assert_eq!(summary_json["per_run"][1]["seed"], 4);
    let acc = summary_json["accuracy_mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(fs::read_to_string(&decisions)
        .unwrap()
        .starts_with("seed,session_id,real_score,fake_score,success"));

    // correlate
    let report = dir.join("report.json");
    let mut args = vec![
        "correlate",
        "--train-corpus",
        corpus.to_str().unwrap(),
        "--annotations",
        ann.to_str().unwrap(),
        "--measure",
        "adv",
        "--runs",
        "2",
        "--seed",
        "3",
        "--report-out",
        report.to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL_NET);
    run_ok(dir, &args);
    let report_json = read_json(&report);
    assert_eq!(report_json["measure"], "adv");
    assert_eq!(report_json["runs"], 2);
    let vars = report_json["per_run"][0]["variables"].as_array().unwrap();
    assert_eq!(vars.len(), 3);
    for v in vars {
        assert!(v["r"].as_f64().unwrap().abs() <= 1.0);
        let p = v["p"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    // none of this mutated the corpus
    assert_eq!(sha256(&corpus), corpus_digest);
}

fn sha256(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn featurize_converts_frames_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let frames = dir.join("frames.jsonl");
    let mut lines = String::new();
    for s in 0..2 {
        for i in 0..8 {
            let speaker = if i % 2 == 0 { "A" } else { "B" };
            let frame = |k: usize| {
                let base = (i as f64) * 0.37 + (k as f64) * 0.11 + (s as f64);
                format!("[{}, {}, {}]", base, base * 1.3 - 0.5, (base * 7.0).sin())
            };
            lines.push_str(&format!(
                "{{\"session_id\":\"s{s}\",\"task_id\":null,\"speaker\":\"{speaker}\",\"index\":{i},\"lld_frames\":[{},{},{}]}}\n",
                frame(0), frame(1), frame(2)
            ));
        }
    }
    fs::write(&frames, lines).unwrap();

    let feats = dir.join("feats.jsonl");
    run_ok(
        dir,
        &[
            "featurize",
            "--input",
            frames.to_str().unwrap(),
            "--output",
            feats.to_str().unwrap(),
        ],
    );
    let text = fs::read_to_string(&feats).unwrap();
    assert!(text.contains("\"features\":["));
    assert!(!text.contains("lld_frames"));

    // idempotent: featurizing the featurized corpus is byte-identical
    let again = dir.join("again.jsonl");
    run_ok(
        dir,
        &[
            "featurize",
            "--input",
            feats.to_str().unwrap(),
            "--output",
            again.to_str().unwrap(),
        ],
    );
    assert_eq!(fs::read(&feats).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn missing_inputs_produce_machine_readable_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (_, report) = run_err(
        dir,
        &[
            "train",
            "--corpus",
            "no/such/corpus.jsonl",
            "--measure",
            "dr",
            "--model-out",
            "m.model",
            "--log-out",
            "l.csv",
        ],
    );
    let text = serde_json::to_string(&report).unwrap();
    assert!(
        text.contains("no/such/corpus.jsonl"),
        "error must name the missing path: {text}"
    );

    let (_, report) = run_err(
        dir,
        &["score", "--corpus", "x.jsonl", "--model", "missing.model", "--output", "s.csv"],
    );
    assert!(serde_json::to_string(&report).unwrap().contains("missing.model"));
}

#[test]
fn unknown_flags_are_rejected_with_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, report) = run_err(tmp.path(), &["synth", "--corpus-out", "c", "--annotations-out", "a", "--bogus-flag", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(serde_json::to_string(&report).unwrap().contains("bogus-flag"));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "seed = 5\nn_sessions = 11\nturns_per_session = 6\nfeature_dim = 4\n").unwrap();

    // file value used when no flag
    run_ok(
        dir,
        &[
            "synth",
            "--corpus-out",
            "c1.jsonl",
            "--annotations-out",
            "a1.csv",
            "--config",
            cfg.to_str().unwrap(),
        ],
    );
    let manifest = read_json(&dir.join("c1.jsonl.manifest.json"));
    assert_eq!(manifest["seeds"], serde_json::json!([5]));

    // flag overrides file
    run_ok(
        dir,
        &[
            "synth",
            "--corpus-out",
            "c2.jsonl",
            "--annotations-out",
            "a2.csv",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "9",
        ],
    );
    let manifest = read_json(&dir.join("c2.jsonl.manifest.json"));
    assert_eq!(manifest["seeds"], serde_json::json!([9]));

    // corpora differ only via seed: same config, different seed -> different bytes
    assert_ne!(fs::read(dir.join("c1.jsonl")).unwrap(), fs::read(dir.join("c2.jsonl")).unwrap());

    // unknown config key is an error naming the key
    fs::write(&cfg, "sessions = 3\n").unwrap();
    let (_, report) = run_err(
        dir,
        &[
            "synth",
            "--corpus-out",
            "c3.jsonl",
            "--annotations-out",
            "a3.csv",
            "--config",
            cfg.to_str().unwrap(),
        ],
    );
    assert!(serde_json::to_string(&report).unwrap().contains("sessions"));
}

#[test]
fn rerun_reproduces_bitwise_and_detects_input_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "n_sessions = 12\nturns_per_session = 6\nfeature_dim = 5\nseed = 2\n").unwrap();
    run_ok(
        dir,
        &[
            "synth",
            "--corpus-out",
            "c.jsonl",
            "--annotations-out",
            "a.csv",
            "--config",
            cfg.to_str().unwrap(),
        ],
    );
    let manifest_path = dir.join("c.jsonl.manifest.json");
    let before = fs::read(dir.join("c.jsonl")).unwrap();

    let out = run_ok(dir, &["rerun", "--manifest", manifest_path.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("reproduced bitwise"));
    assert_eq!(fs::read(dir.join("c.jsonl")).unwrap(), before);

    // changing a recorded input makes the rerun refuse to proceed
    fs::write(&cfg, "n_sessions = 12\nturns_per_session = 6\nfeature_dim = 5\nseed = 3\n").unwrap();
    let (_, report) = run_err(dir, &["rerun", "--manifest", manifest_path.to_str().unwrap()]);
    let text = serde_json::to_string(&report).unwrap();
    assert!(text.contains("changed"), "{text}");
}

#[test]
fn same_seed_reproduces_models_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (corpus, _) = synth_small(dir, &[]);
    let train = |model: &str, seed: &str| {
        let mut args = vec![
            "train",
            "--corpus",
            corpus.to_str().unwrap(),
            "--measure",
            "adv",
            "--model-out",
            model,
            "--log-out",
            "log.csv",
            "--seed",
            seed,
        ];
        args.extend_from_slice(SMALL_NET);
        run_ok(dir, &args);
    };
    train("m1.model", "7");
    train("m2.model", "7");
    train("m3.model", "8");
    let m1 = fs::read(dir.join("m1.model")).unwrap();
    assert_eq!(m1, fs::read(dir.join("m2.model")).unwrap());
    assert_ne!(m1, fs::read(dir.join("m3.model")).unwrap());
}

#[test]
fn dimension_mismatch_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (corpus, _) = synth_small(dir, &[]);
    // default feat is 228; the corpus is 12-wide
    let (_, report) = run_err(
        dir,
        &[
            "train",
            "--corpus",
            corpus.to_str().unwrap(),
            "--measure",
            "dr",
            "--model-out",
            "m.model",
            "--log-out",
            "l.csv",
        ],
    );
    let text = serde_json::to_string(&report).unwrap();
    assert!(text.contains("width"), "{text}");
}

#[test]
fn help_enumerates_the_flag_surface() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut all_help = String::new();
    for sub in [
        None,
        Some("synth"),
        Some("featurize"),
        Some("train"),
        Some("score"),
        Some("shuffle-test"),
        Some("correlate"),
        Some("gradcheck"),
        Some("rerun"),
    ] {
        let args: Vec<&str> = match sub {
            None => vec!["--help"],
            Some(s) => vec![s, "--help"],
        };
        let out = run_ok(dir, &args);
        all_help.push_str(&String::from_utf8_lossy(&out.stdout));
    }
    // every flag exercised anywhere in the test and acceptance suites
    for flag in [
        "--corpus-out",
        "--annotations-out",
        "--n-sessions",
        "--turns-per-session",
        "--feature-dim",
        "--consistency",
        "--entrainment",
        "--noise-sigma",
        "--seed",
        "--input",
        "--output",
        "--corpus",
        "--measure",
        "--model-out",
        "--log-out",
        "--config",
        "--feat",
        "--hidden",
        "--code",
        "--batch-size",
        "--max-epochs",
        "--patience",
        "--lr",
        "--beta1",
        "--beta2",
        "--adam-eps",
        "--grl-lambda",
        "--model",
        "--runs",
        "--parallel",
        "--summary-out",
        "--decisions-out",
        "--train-corpus",
        "--eval-corpus",
        "--annotations",
        "--report-out",
        "--manifest",
    ] {
        assert!(all_help.contains(flag), "help output lacks {flag}");
    }
}

#[test]
fn parallel_runs_match_sequential_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (corpus, _) = synth_small(dir, &[]);
    let shuffle = |summary: &str, decisions: &str, parallel: &str| {
        let mut args = vec![
            "shuffle-test",
            "--corpus",
            corpus.to_str().unwrap(),
            "--measure",
            "adv",
            "--runs",
            "2",
            "--seed",
            "11",
            "--parallel",
            parallel,
            "--summary-out",
            summary,
            "--decisions-out",
            decisions,
        ];
        args.extend_from_slice(SMALL_NET);
        run_ok(dir, &args);
    };
    shuffle("seq.json", "seq.csv", "1");
    shuffle("par.json", "par.csv", "2");
    assert_eq!(fs::read(dir.join("seq.json")).unwrap(), fs::read(dir.join("par.json")).unwrap());
    assert_eq!(fs::read(dir.join("seq.csv")).unwrap(), fs::read(dir.join("par.csv")).unwrap());
}
