use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trajlang"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

/// Synthesizes a small population and builds its corpus.
fn small_corpus(root: &Path) -> PathBuf {
    let synth = root.join("synth");
    let corpus = root.join("corpus");
    let o = run(&["synth", "--out", s(&synth), "--agents", "30", "--days", "7", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "build-corpus",
        "--pings",
        s(&synth.join("pings.csv")),
        "--environment",
        s(&synth.join("environment.csv")),
        "--out",
        s(&corpus),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    corpus
}

fn metric(metrics: &str, model: &str, name: &str, key: &str) -> Option<String> {
    metrics.lines().find_map(|l| {
        let f: Vec<&str> = l.split(',').collect();
        (f[0] == model && f[1] == name && f[2] == key).then(|| f[3].to_string())
    })
}

#[test]
fn encode_matches_hand_computed_mesh() {
    let (lat, lon) = (35.681236_f64, 139.767125_f64);
    // Floor formulas evaluated directly.
    let p = (lat * 1.5).floor();
    let u = lon.floor() - 100.0;
    let q = ((lat * 1.5 - p) * 8.0).floor();
    let v = ((lon - lon.floor()) * 8.0).floor();
    let e = ((lat * 1.5 - p) * 80.0 - q * 10.0).floor();
    let f = ((lon - lon.floor()) * 80.0 - v * 10.0).floor();
    let expected = format!("{p}-{u}-{q}-{v}-{e}-{f}");
    assert_eq!(expected, "53-39-4-6-1-1");

    let o = run(&["encode", "--lat", "35.681236", "--lon", "139.767125", "--level", "3"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), expected);

    let o = run(&["--json", "encode", "--lat", "35.681236", "--lon", "139.767125", "--level", "3"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["code"], expected);
}

#[test]
fn decode_returns_cell_centre() {
    let o = run(&["--json", "decode", "--code", "53-39"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["lat"].as_f64().unwrap() - (53.5 / 1.5)).abs() < 1e-9);
    assert!((v["lon"].as_f64().unwrap() - 139.5).abs() < 1e-9);
}

#[test]
fn encode_outside_the_box_is_a_config_error() {
    let o = run(&["encode", "--lat", "10.0", "--lon", "139.0"]);
    assert_eq!(o.status.code(), Some(2));
    let v = error_json(&o);
    assert_eq!(v["exit_code"], 2);
    assert_eq!(v["error"], "config");
}

#[test]
fn bad_flags_and_missing_inputs_exit_2_with_json() {
    let o = run(&["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["exit_code"], 2);

    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit-markov", "--corpus", s(&dir.path().join("absent")), "--out", s(&dir.path().join("m.txt"))]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "config");
    assert!(!dir.path().join("m.txt").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[model]\nn_layer = 3\n").unwrap();
    let o = run(&["--config", s(&cfg), "synth", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("o").join("pings.csv").exists());
}

#[test]
fn malformed_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    fs::write(corpus.join("train.days.tsv"), "broken\n").unwrap();
    let o = run(&["fit-ar", "--corpus", s(&corpus), "--out", s(&dir.path().join("ar.txt"))]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "data");
    assert!(!dir.path().join("ar.txt").exists());
}

#[test]
fn failed_commands_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synth");
    // A directory where a file must go makes the last rename fail.
    fs::create_dir_all(out.join("world.toml")).unwrap();
    let o = run(&["synth", "--out", s(&out), "--agents", "5", "--days", "2"]);
    assert!(!o.status.success());
    error_json(&o);
    let left: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .flatten()
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "world.toml")
        .collect();
    assert!(left.is_empty(), "{left:?}");
}

#[test]
fn identical_continuations_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    // The test lines themselves, in the generated-file layout. Only days with
    // more than the four prompt stops get a continuation.
    let test = fs::read_to_string(corpus.join("test.days.tsv")).unwrap();
    let mut gen = String::from("index\tdevice_id\tdate\tsample\tstatus\ttext\n");
    for (i, l) in test.lines().enumerate() {
        let f: Vec<&str> = l.split('\t').collect();
        if f[3].split(',').count() > 4 {
            gen.push_str(&format!("{i}\t{}\t{}\t0\tok\t{}\n", f[0], f[1], f[4]));
        }
    }
    let gen_path = dir.path().join("gen.tsv");
    fs::write(&gen_path, gen).unwrap();
    let eval = dir.path().join("eval");
    let o = run(&["evaluate", "--corpus", s(&corpus), "--generated", s(&gen_path), "--out", s(&eval)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(eval.join("metrics.csv")).unwrap();
    for h in ["1h", "2h", "4h", "8h", "final"] {
        for m in ["hit_rate_3km", "hit_rate_10km"] {
            let v = metric(&metrics, "transformer", m, h).unwrap();
            assert!(v == "NA" || v.parse::<f64>().unwrap() == 1.0, "{m} {h}: {v}");
        }
    }
    assert_eq!(metric(&metrics, "transformer", "hit_rate_3km", "1h").unwrap().parse::<f64>().unwrap(), 1.0);
    // Lines carry binned intervals while the truth keeps minutes, so the only
    // interval error left is quantization: at most one bin in log space.
    let bin_width = 1.5f64.log10();
    for k in ["next", "second", "third", "fourth"] {
        let v = metric(&metrics, "transformer", "male", k).unwrap();
        assert!(v == "NA" || v.parse::<f64>().unwrap() <= bin_width, "male {k}: {v}");
    }
    let ks: f64 = metric(&metrics, "transformer", "interval_ks", "truth").unwrap().parse().unwrap();
    assert_eq!(ks, 0.0);
    for f in ["distance_cdf.csv", "interval_cdf.csv", "summary.txt", "evaluate.config.toml"] {
        assert!(eval.join(f).is_file(), "{f}");
    }
}

#[test]
fn smoke_pipeline_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("smoke");
    let o = run(&["--json", "smoke", "--out", s(&root)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for line in String::from_utf8_lossy(&o.stdout).lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }
    for f in [
        "synth/pings.csv",
        "synth/environment.csv",
        "synth/world.toml",
        "corpus/alphabet.tsv",
        "corpus/split.txt",
        "corpus/train.days.tsv",
        "corpus/test.days.tsv",
        "vocab.txt",
        "model.ckpt",
        "model.ckpt.log.csv",
        "model.ckpt.config.toml",
        "generated.tsv",
        "markov1.txt",
        "markov2.txt",
        "ar.txt",
        "eval/metrics.csv",
    ] {
        assert!(root.join(f).is_file(), "{f}");
    }
    let snapshot = fs::read_to_string(root.join("model.ckpt.config.toml")).unwrap();
    assert!(snapshot.contains("n_layers = 2"));

    // Attention tables: one row per layer, one column per category.
    for f in ["attention_location.csv", "attention_interval.csv"] {
        let text = fs::read_to_string(root.join("attention").join(f)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2, "{f}");
        assert_eq!(lines[0], "layer,s(dow),s(temp),s(wth),s(cov),s(gen),s(age),s(hc),s(wc),|,X,r");
        for (i, l) in lines[1..].iter().enumerate() {
            let cells: Vec<&str> = l.split(',').collect();
            assert_eq!(cells.len(), 12);
            assert_eq!(cells[0], (i + 1).to_string());
            let total: f64 = cells[1..].iter().filter(|c| **c != "NA").map(|c| c.parse::<f64>().unwrap()).sum();
            assert!(total <= 1.0 + 1e-6, "{l}");
        }
    }
}
