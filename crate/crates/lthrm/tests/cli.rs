use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lthrm::artifacts::{read_document, write_document, ClusteringDoc, MetricsDoc};
use lthrm_core::{AnnotationSet, DetectedEvent, DetectionResult};

fn lthrm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lthrm"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lthrm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    lthrm(dir, args).status.code().unwrap()
}

fn synth(dir: &Path, out: &str, seed: &str) {
    ok(
        dir,
        &["synth", "--out", out, "--recordings", "3", "--duration", "240", "--swallows", "8", "--seed", seed],
    );
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &[]), 1);
    assert_eq!(code(d, &["synth", "--no-such-flag"]), 1);
    assert_eq!(code(d, &["synth", "--recordings", "0"]), 1);
    assert_eq!(code(d, &["detect-baseline", "missing.mlm"]), 2);
    fs::write(d.join("bad.toml"), "[ml]\nstrid = 3\n").unwrap();
    assert_eq!(code(d, &["--config", "bad.toml", "config"]), 1);
    fs::write(d.join("rec.mlm"), b"MLM1 not really").unwrap();
    assert_eq!(code(d, &["detect-baseline", "rec.mlm"]), 2);
    assert_eq!(code(d, &["config"]), 0);
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "a", "11");
    synth(d, "b", "11");
    synth(d, "c", "12");
    let names = |dir: &str| files(&d.join(dir)).iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    assert_eq!(names("a"), names("b"));
    assert_eq!(names("a").len(), 6);
    for p in files(&d.join("a")) {
        let name = p.file_name().unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(d.join("b").join(name)).unwrap());
    }
    assert_ne!(fs::read(d.join("a/rec_000.mlm")).unwrap(), fs::read(d.join("c/rec_000.mlm")).unwrap());
}

#[test]
fn csv_output_feeds_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "raw", "--recordings", "1", "--duration", "120", "--swallows", "4", "--format", "csv"]);
    ok(d, &["preprocess", "raw/rec_000.csv", "--out", "pre"]);
    assert!(d.join("pre/rec_000.mlm").exists());
    assert!(d.join("pre/rec_000.annotations.json").exists());
    // Raw and preprocessed inputs give the same detections.
    ok(d, &["detect-baseline", "raw/rec_000.csv", "--out", "x"]);
    ok(d, &["detect-baseline", "pre/rec_000.mlm", "--out", "y"]);
    let x: DetectionResult = read_document(&d.join("x/rec_000.detections.json")).unwrap();
    let y: DetectionResult = read_document(&d.join("y/rec_000.detections.json")).unwrap();
    assert_eq!(x.starts(), y.starts());
    assert_eq!(code(d, &["preprocess", "pre/rec_000.mlm", "--out", "again"]), 2);
}

#[test]
fn perfect_predictions_score_one_hundred() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "data", "3");
    for i in 0..3 {
        let ann: AnnotationSet = read_document(&d.join(format!("data/rec_{i:03}.annotations.json"))).unwrap();
        let det = DetectionResult {
            recording_id: ann.recording_id.clone(),
            events: ann
                .starts()
                .iter()
                .map(|&s| DetectedEvent {
                    start: s,
                    span: (s, s),
                    confidence: 1.0,
                })
                .collect(),
            method: "oracle".into(),
            params_digest: String::new(),
        };
        write_document(&det, &d.join(format!("perfect/rec_{i:03}.detections.json"))).unwrap();
    }
    let table = ok(
        d,
        &["eval", "data/rec_000.mlm", "data/rec_001.mlm", "data/rec_002.mlm", "--detections-dir", "perfect", "--out", "ev"],
    );
    assert!(table.contains("| 100.00 ± 0.00 | 100.00 ± 0.00 | 100.00 ± 0.00 |"), "{table}");
    let doc: MetricsDoc = read_document(&d.join("ev/metrics_d400_start_centered.json")).unwrap();
    assert_eq!((doc.report.tp, doc.report.fp, doc.report.fn_), (24, 0, 0));
    assert!(doc.report.distances.iter().all(|&x| x == 0));
}

#[test]
fn full_pipeline_writes_one_montage_per_cluster() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "data", "5");
    let recs = ["data/rec_000.mlm", "data/rec_001.mlm", "data/rec_002.mlm"];
    let with = |extra: &[&'static str]| -> Vec<String> {
        recs.iter().map(|s| s.to_string()).chain(extra.iter().map(|s| s.to_string())).collect()
    };
    let run = |cmd: &str, extra: &[&'static str]| {
        let args: Vec<String> = std::iter::once(cmd.to_string()).chain(with(extra)).collect();
        ok(d, &args.iter().map(String::as_str).collect::<Vec<_>>())
    };
    run("train", &["--epochs", "2", "--input-side", "16", "--model", "m.lcm"]);
    run("detect", &["--model", "m.lcm", "--stride", "25", "--out", "det"]);
    run("eval", &["--detections-dir", "det", "--out", "ev"]);
    run("cluster", &["--from-annotations", "--k-min", "2", "--k-max", "4", "--out", "cl"]);
    run(
        "report",
        &["--clustering", "cl/clustering.json", "--metrics", "ev/metrics_d400_start_centered.json", "--out", "rep"],
    );
    let doc: ClusteringDoc = read_document(&d.join("cl/clustering.json")).unwrap();
    assert_eq!(doc.swallows.len() + doc.skipped.len(), 24);
    let pngs: Vec<String> = files(&d.join("rep"))
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("cluster_") && n.ends_with(".png"))
        .collect();
    let montages = pngs.iter().filter(|n| !n.ends_with("_extremes.png")).count();
    assert_eq!(montages, doc.result.clusters.len());
    assert_eq!(pngs.len(), 2 * montages);
    let html = fs::read_to_string(d.join("rep/index.html")).unwrap();
    assert!(html.contains("metrics.md") || html.contains("<table"));
    assert!(!html.contains(&d.display().to_string()));
}
