use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use base64::Engine;
use hmcd::http::{load_corpus, save_corpus, Corpus, Direction};
use hmcd::synth::separable_flows;
use serde_json::json;

fn hmcd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmcd"))
        .args(args)
        .current_dir(dir)
        .env_remove("HMCD_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn toy_corpus(dir: &Path, name: &str, per_class: usize, seed: u64) {
    save_corpus(&Corpus::new("synthetic", separable_flows(per_class, seed)), &dir.join(name)).unwrap();
}

const QUICK: [&str; 10] = [
    "--epochs", "3", "--batch", "16", "--lr", "0.003", "--gan-iterations", "3", "--quiet", "--folds",
];

#[test]
fn no_arguments_prints_synopsis() {
    let dir = tempfile::tempdir().unwrap();
    let out = hmcd(&[], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&hmcd(&["gradcheck", "--folds", "1"], dir.path())), 1);
    fs::write(dir.path().join("c.conf"), "epoch=3\n").unwrap();
    assert_eq!(code(&hmcd(&["gradcheck", "--config", "c.conf"], dir.path())), 1);
    assert_eq!(code(&hmcd(&["featurize", "--corpus", "missing", "--output", "x"], dir.path())), 1);
    fs::write(dir.path().join("bad"), "not a corpus\n").unwrap();
    fs::write(dir.path().join("bad.manifest"), "{}").unwrap();
    assert_eq!(code(&hmcd(&["featurize", "--corpus", "bad", "--output", "x"], dir.path())), 2);
    assert_eq!(code(&hmcd(&["evaluate", "--preset", "ep9", "--corpus", "bad", "--output", "r"], dir.path())), 1);
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = hmcd(&["gradcheck"], dir.path());
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for fragment in ["conv2d", "conv-relu-pool", "dense", "lstm-step", "softmax-ce", "hybrid"] {
        assert!(text.contains(&format!("{fragment}\tmax\t")), "{fragment} missing");
    }
    assert!(text.trim_end().ends_with("PASS"));
}

#[test]
fn ingest_assembles_and_labels_flows() {
    let dir = tempfile::tempdir().unwrap();
    let flows = separable_flows(3, 4);
    let mut lines = String::new();
    for f in &flows {
        for m in &f.messages {
            let key = if m.direction == Direction::Request { f.key } else { f.key.reversed() };
            let rec = json!({
                "src_ip": key.src_ip, "src_port": key.src_port,
                "dst_ip": key.dst_ip, "dst_port": key.dst_port,
                "direction": m.direction, "ts_micros": m.ts_micros,
                "raw_b64": base64::engine::general_purpose::STANDARD.encode(&m.raw),
                "label": f.label,
            });
            lines.push_str(&format!("{rec}\n"));
        }
    }
    // one unparseable message is skipped in strict mode
    lines.push_str(&format!(
        "{}\n",
        json!({"src_ip": "10.9.9.9", "src_port": 1, "dst_ip": "10.0.0.1", "dst_port": 80,
               "direction": "request", "ts_micros": 0, "raw_b64": "R0VUCg=="})
    ));
    fs::write(dir.path().join("dump.jsonl"), lines).unwrap();
    let out = hmcd(&["ingest", "--input", "dump.jsonl", "--output", "c.corpus"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let corpus = load_corpus(&dir.path().join("c.corpus")).unwrap();
    assert_eq!(corpus.flows.len(), flows.len());
    assert_eq!(corpus.manifest.counts.malicious, 3);
    assert_eq!(corpus.manifest.counts.benign, 3);
    let raws = |c: &[hmcd::http::Flow]| {
        let mut v: Vec<Vec<Vec<u8>>> = c.iter().map(|f| f.messages.iter().map(|m| m.raw.clone()).collect()).collect();
        v.sort();
        v
    };
    assert_eq!(raws(&corpus.flows), raws(&flows));

    let out = hmcd(&["ingest", "--input", "dump.jsonl", "--output", "u.corpus", "--label", "benign"], dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(load_corpus(&dir.path().join("u.corpus")).unwrap().manifest.counts.benign, 6);
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_corpus(d, "toy.corpus", 30, 1);
    let run = |args: &[&str]| {
        let mut all: Vec<&str> = args.to_vec();
        all.extend(QUICK);
        all.push("2");
        let out = hmcd(&all, d);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["featurize", "--corpus", "toy.corpus", "--output", "samples.jsonl"]);
    assert_eq!(fs::read_to_string(d.join("samples.jsonl")).unwrap().lines().count(), 60);

    run(&["build-dict", "--corpus", "toy.corpus", "--output", "dict.txt", "--p-threshold", "2"]);
    assert!(fs::read_to_string(d.join("dict.txt")).unwrap().contains("xmrig"));

    run(&["gen-gaf", "--corpus", "toy.corpus", "--count", "6", "--output", "gaf.corpus", "--save-generator", "gen"]);
    let gafs = load_corpus(&d.join("gaf.corpus")).unwrap();
    assert_eq!(gafs.manifest.counts.malicious, 6);
    run(&["gen-gaf", "--corpus", "toy.corpus", "--count", "6", "--output", "gaf2.corpus", "--generator", "gen"]);
    assert_eq!(load_corpus(&d.join("gaf2.corpus")).unwrap().flows, gafs.flows);

    run(&["train", "--corpus", "toy.corpus", "--gaf-corpus", "gaf.corpus", "--output", "model.ckpt", "--report", "cv.json"]);
    let cv: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("cv.json")).unwrap()).unwrap();
    assert_eq!(cv["report"]["runs"].as_array().unwrap().len(), 2);
    assert_eq!(cv["provenance"]["config"]["epochs"], "3");
    assert_eq!(cv["provenance"]["corpora"]["train"]["manifest"]["counts"]["benign"], 30);

    let out = run(&["predict", "--model", "model.ckpt", "--corpus", "toy.corpus"]);
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 60);
    for l in &lines {
        let score = l["score"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&score));
        let expected = if score > 0.5 { "malicious" } else { "benign" };
        assert_eq!(l["label"], expected);
    }
}

#[test]
fn evaluate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_corpus(d, "toy.corpus", 40, 2);
    let eval = |out: &str| {
        let args = [
            "evaluate", "--preset", "custom", "--corpus", "toy.corpus", "--output", out,
            "--train-malicious", "15", "--train-benign", "15", "--test-malicious", "10", "--test-benign", "10",
            "--repeats", "2", "--gaf-count", "4", "--seed", "7", "--epochs", "2", "--batch", "16",
            "--gan-iterations", "2", "--p-threshold", "2", "--quiet",
        ];
        let o = hmcd(&args, d);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    eval("a.json");
    eval("b.json");
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
    assert_eq!(fs::read(d.join("a.json.csv")).unwrap(), fs::read(d.join("b.json.csv")).unwrap());
    let csv = fs::read_to_string(d.join("a.json.csv")).unwrap();
    assert!(csv.starts_with("precision,recall,f1,fpr\n"));
    assert_eq!(csv.lines().count(), 3);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["seed"], 7);
    assert_eq!(report["provenance"]["run"]["runs"][1]["gaf_samples"], 4);
    assert_eq!(report["report"]["runs"][0]["seed"], 7);
}

#[test]
fn environment_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hmcd"))
        .args(["gradcheck", "--quiet"])
        .env("HMCD_SEED", "not-a-number")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_hmcd"))
        .args(["gradcheck", "--quiet", "--seed", "3"])
        .env("HMCD_SEED", "not-a-number")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
}
