use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xlstr::corpus::write_dataset;
use xlstr::synthetic::{Fixture, FixtureConfig};

const BIN: &str = env!("CARGO_BIN_EXE_xlstr");

fn run(args: &[&str]) -> Output {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    // Exit status and the stderr error object always agree.
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(
        out.status.success(),
        !stderr.contains("\"error\""),
        "stderr: {stderr}"
    );
    out
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr
        .lines()
        .find(|l| l.starts_with('{'))
        .expect("error line");
    serde_json::from_str(line).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn fixture(dir: &Path) -> (Fixture, PathBuf) {
    let fx = Fixture::generate(&FixtureConfig::default()).unwrap();
    fx.write_to(dir).unwrap();
    (fx, dir.join("store.jsonl"))
}

#[test]
fn fit_with_toy_provider_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _) = fixture(dir.path());
    let ds = dir.path().join("sources.csv");
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&[
            "--provider",
            "toy",
            "--k",
            "8",
            "fit",
            "--dataset",
            s(&ds),
            "--out",
            s(out),
        ]);
        assert!(o.status.success());
    }
    let pa = read_json(&a);
    assert_eq!(pa["dim"], 32);
    assert_eq!(pa["k"], 8);
    assert_eq!(pa["fingerprint"], read_json(&b)["fingerprint"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn score_with_and_without_whitening() {
    let dir = tempfile::tempdir().unwrap();
    let (fx, store) = fixture(dir.path());
    let labeled = dir.path().join("labeled.csv");
    write_dataset(
        &fx.labeled_target(),
        std::fs::File::create(&labeled).unwrap(),
    )
    .unwrap();
    let (raw, white, params) = (
        dir.path().join("raw.json"),
        dir.path().join("white.json"),
        dir.path().join("params.json"),
    );
    let o = run(&[
        "--store",
        s(&store),
        "score",
        "--dataset",
        s(&labeled),
        "--no-whitening",
        "--out",
        s(&raw),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("spearman"));
    assert!(run(&[
        "--store",
        s(&store),
        "fit",
        "--dataset",
        s(&labeled),
        "--out",
        s(&params)
    ])
    .status
    .success());
    assert!(run(&[
        "--store",
        s(&store),
        "score",
        "--dataset",
        s(&labeled),
        "--params",
        s(&params),
        "--out",
        s(&white)
    ])
    .status
    .success());
    let (r, w) = (read_json(&raw), read_json(&white));
    assert_eq!(w["scores"].as_array().unwrap().len(), 300);
    assert!(w["spearman"].as_f64().unwrap() > r["spearman"].as_f64().unwrap());
}

#[test]
fn filter_writes_report_and_training_set() {
    let dir = tempfile::tempdir().unwrap();
    let (fx, store) = fixture(dir.path());
    let (report, training) = (dir.path().join("report.json"), dir.path().join("train.csv"));
    let o = run(&[
        "--store",
        s(&store),
        "--target-count",
        "300",
        "filter",
        "--target",
        s(&dir.path().join("target.csv")),
        "--source",
        s(&dir.path().join("sources.csv")),
        "--report",
        s(&report),
        "--training",
        s(&training),
    ]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("exclude"));
    let r = read_json(&report);
    assert_eq!(r["target_lang"], "esp");
    assert_eq!(r["probes"].as_array().unwrap().len(), 4);
    let kept: Vec<&str> = r["kept_langs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(!kept.contains(&fx.adversarial_lang.as_str()));
    let lines = std::fs::read_to_string(&training).unwrap().lines().count();
    assert_eq!(lines, 1 + 300 * kept.len());
}

#[test]
fn pipeline_is_deterministic_and_drops_adversarial_source() {
    let dir = tempfile::tempdir().unwrap();
    let (fx, store) = fixture(dir.path());
    let target = dir.path().join("target.csv");
    let sources = dir.path().join("sources.csv");
    let mut outputs = Vec::new();
    for name in ["one", "two"] {
        let out = dir.path().join(name);
        let o = run(&[
            "--store",
            s(&store),
            "--target-count",
            "300",
            "--seed",
            "5",
            "pipeline",
            "--target",
            s(&target),
            "--source",
            s(&sources),
            "--out-dir",
            s(&out),
        ]);
        assert!(o.status.success());
        outputs.push(out);
    }
    for file in [
        "filter_report.json",
        "training.csv",
        "params.json",
        "predictions.csv",
        "target_scores.json",
    ] {
        let a = std::fs::read(outputs[0].join(file)).unwrap();
        assert_eq!(a, std::fs::read(outputs[1].join(file)).unwrap(), "{file}");
    }
    let training = std::fs::read_to_string(outputs[0].join("training.csv")).unwrap();
    assert!(!training
        .lines()
        .skip(1)
        .any(|l| l.split(',').nth(1) == Some(fx.adversarial_lang.as_str())));
    let preds = std::fs::read_to_string(outputs[0].join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("pair_id,score"));
    assert_eq!(preds.lines().count(), 301);
}

#[test]
fn empty_training_pool_fails_with_error_object() {
    let dir = tempfile::tempdir().unwrap();
    let (fx, store) = fixture(dir.path());
    let adv = dir.path().join("adv.csv");
    write_dataset(
        fx.sources.last().unwrap(),
        std::fs::File::create(&adv).unwrap(),
    )
    .unwrap();
    let o = run(&[
        "--store",
        s(&store),
        "pipeline",
        "--target",
        s(&dir.path().join("target.csv")),
        "--source",
        s(&adv),
        "--out-dir",
        s(&dir.path().join("out")),
    ]);
    assert!(!o.status.success());
    assert_eq!(error_json(&o)["error"]["kind"], "empty_training_pool");
}

#[test]
fn missing_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "fit",
        "--dataset",
        s(&dir.path().join("nope.csv")),
        "--out",
        s(&dir.path().join("p.json")),
    ]);
    assert!(!o.status.success());
    assert_eq!(error_json(&o)["error"]["kind"], "config");
}

#[test]
fn export_hist_writes_twenty_bins() {
    let dir = tempfile::tempdir().unwrap();
    let (_, store) = fixture(dir.path());
    let report = dir.path().join("scores.json");
    let csv = dir.path().join("hist.csv");
    assert!(run(&[
        "--store",
        s(&store),
        "score",
        "--dataset",
        s(&dir.path().join("target.csv")),
        "--out",
        s(&report)
    ])
    .status
    .success());
    assert!(
        run(&["export-hist", "--report", s(&report), "--out", s(&csv)])
            .status
            .success()
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bin_lo,bin_hi,count");
    assert_eq!(lines.len(), 21);
    let total: u64 = lines[1..]
        .iter()
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 300);
}
