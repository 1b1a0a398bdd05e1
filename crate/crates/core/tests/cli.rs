use std::fs;
use std::path::{Path, PathBuf};

use styleval::cli::{manifest_path, run, sha256_file, RunManifest};
use styleval::manipulation::SWEEP_HEADER;
use styleval::rigor::{Ensemble, EvalRecord};
use tempfile::TempDir;

fn styleval(args: &[&str]) -> i32 {
    run(std::iter::once("styleval").chain(args.iter().copied()))
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work { dir: tempfile::tempdir().unwrap() }
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Small train/test corpora, references and a classifier.
    fn prepared() -> Self {
        let w = Work::new();
        assert_eq!(styleval(&["synth", "--seed", "1", "--n", "40", "--out", &w.p("train.tsv")]), 0);
        assert_eq!(
            styleval(&["synth", "--seed", "2", "--n", "20", "--out", &w.p("test.tsv"), "--refs-out", &w.p("refs.txt")]),
            0
        );
        assert_eq!(styleval(&["classifier", "--corpus", &w.p("train.tsv"), "--out", &w.p("clf.json")]), 0);
        w
    }
}

fn manifest(primary: &Path) -> RunManifest {
    RunManifest::load(manifest_path(primary)).unwrap()
}

#[test]
fn validation_errors_exit_2() {
    let w = Work::prepared();
    assert_eq!(styleval(&["synth", "--n", "9", "--out", &w.p("x.tsv")]), 2);
    assert_eq!(styleval(&["train", "--arch", "bogus", "--corpus", &w.p("train.tsv"), "--out", &w.p("m.json")]), 2);
    assert_eq!(styleval(&["train", "--arch", "sae", "--corpus", &w.p("missing.tsv"), "--out", &w.p("m.json")]), 2);
    assert_eq!(
        styleval(&["ensemble", "--arch", "sae", "--corpus", &w.p("train.tsv"), "--runs", "1", "--out", &w.p("ens")]),
        2
    );
    assert_eq!(styleval(&["frobnicate"]), 2);
    assert_eq!(styleval(&["--help"]), 0);
    let m = manifest(&w.path("x.tsv"));
    assert_eq!(m.exit_code, 2);
    assert!(m.error.unwrap().contains("even"));
}

#[test]
fn divergence_exits_3_and_keeps_log() {
    let w = Work::prepared();
    fs::write(w.path("cfg.txt"), "lr = 1e305\nepochs = 3\n").unwrap();
    let code = styleval(&[
        "train", "--arch", "baseline", "--corpus", &w.p("train.tsv"), "--config", &w.p("cfg.txt"), "--out", &w.p("m.json"),
    ]);
    assert_eq!(code, 3);
    assert!(!w.path("m.json").exists());
    assert!(w.path("m.json.log.csv").exists());
    assert_eq!(manifest(&w.path("m.json")).exit_code, 3);
}

#[test]
fn train_eval_manipulate_pipeline() {
    let w = Work::prepared();
    let inputs = ["train.tsv", "test.tsv", "refs.txt", "clf.json"].map(|f| sha256_file(&w.path(f)).unwrap());
    assert_eq!(
        styleval(&["train", "--arch", "baseline", "--corpus", &w.p("train.tsv"), "--epochs", "2", "--seed", "4", "--out", &w.p("m.json")]),
        0
    );
    let log = fs::read_to_string(w.path("m.json.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let m = manifest(&w.path("m.json"));
    assert_eq!((m.command.as_str(), m.seeds.as_slice(), m.exit_code), ("train", &[4][..], 0));
    assert!(m.verify().unwrap());
    assert_eq!(m.config.unwrap()["epochs"], 2);

    let eval = |out: &str, refs: bool| {
        let paths = ["m.json", "test.tsv", "clf.json", out, "refs.txt", "batch.tsv"].map(|f| w.p(f));
        let [m, t, c, o, r, b] = paths.each_ref().map(String::as_str);
        let mut args = vec![
            "eval", "--model", m, "--corpus", t, "--classifier", c, "--out", o, "--batch-out", b,
        ];
        if refs {
            args.extend(["--refs", r]);
        }
        assert_eq!(styleval(&args), 0);
        serde_json::from_str::<serde_json::Value>(&fs::read_to_string(w.path(out)).unwrap()).unwrap()
    };
    let with = eval("with.json", true);
    let without = eval("without.json", false);
    assert!(with.get("ref_bleu").is_some());
    assert!(without.get("ref_bleu").is_none());
    assert_eq!(with["accuracy"], without["accuracy"]);
    assert_eq!(fs::read_to_string(w.path("batch.tsv")).unwrap().lines().count(), 20);

    assert_eq!(
        styleval(&[
            "manipulate", "--model-output", &w.p("batch.tsv"), "--classifier-internal", &w.p("clf.json"),
            "--classifier-external", &w.p("clf.json"), "--refs", &w.p("refs.txt"), "--out", &w.p("sweep.csv"),
        ]),
        0
    );
    let sweep = fs::read_to_string(w.path("sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], SWEEP_HEADER);
    assert_eq!(lines.len(), 12);
    let last_acc: f64 = lines[11].split(',').nth(1).unwrap().parse().unwrap();
    let first_acc: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(last_acc >= first_acc);
    assert!(manifest(&w.path("sweep.csv")).verify().unwrap());

    let after = ["train.tsv", "test.tsv", "refs.txt", "clf.json"].map(|f| sha256_file(&w.path(f)).unwrap());
    assert_eq!(inputs, after, "inputs were modified");
}

#[test]
fn precomputed_copy_input_batch() {
    let w = Work::prepared();
    let test = fs::read_to_string(w.path("test.tsv")).unwrap();
    let batch: String = test
        .lines()
        .map(|l| {
            let (label, text) = l.split_once('\t').unwrap();
            format!("{text}\t{text}\t{label}\n")
        })
        .collect();
    fs::write(w.path("copy.tsv"), batch).unwrap();
    // the pathology needs a classifier that is perfect on held-out text
    assert_eq!(styleval(&["synth", "--seed", "3", "--n", "200", "--out", &w.p("big.tsv")]), 0);
    assert_eq!(styleval(&["classifier", "--corpus", &w.p("big.tsv"), "--out", &w.p("big.json")]), 0);
    let args = ["eval", "--precomputed", &w.p("copy.tsv"), "--classifier", &w.p("big.json"), "--out", &w.p("copy.json")];
    assert_eq!(styleval(&args), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(w.path("copy.json")).unwrap()).unwrap();
    assert_eq!(v["self_bleu"], 100.0);
    assert_eq!(v["accuracy"], 0.0);

    // model and precomputed modes are exclusive
    let both = [
        "eval", "--precomputed", &w.p("copy.tsv"), "--model", &w.p("x"), "--classifier", &w.p("clf.json"), "--out", &w.p("o"),
    ];
    assert_eq!(styleval(&both), 2);
}

#[test]
fn ensemble_layout_and_aggregates() {
    let w = Work::prepared();
    let args = [
        "ensemble", "--arch", "disc", "--corpus", &w.p("train.tsv"), "--epochs", "2", "--runs", "5", "--seed-base", "10",
        "--eval-corpus", &w.p("test.tsv"), "--refs", &w.p("refs.txt"), "--classifier", &w.p("clf.json"), "--jobs", "2",
        "--out", &w.p("ens"),
    ];
    assert_eq!(styleval(&args), 0);
    let ens = Ensemble::load(w.path("ens/ensemble.json")).unwrap();
    assert_eq!(ens.runs.len(), 5);
    let mut records = Vec::new();
    for seed in 10..15 {
        let dir = w.path(&format!("ens/run-{seed}"));
        for f in ["model.json", "train_log.csv", "batch.tsv", "metrics.json"] {
            assert!(dir.join(f).exists(), "missing {f} for seed {seed}");
        }
        let r: EvalRecord = serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
        assert_eq!(r.seed, seed);
        records.push(r);
    }
    let mean = |f: fn(&EvalRecord) -> f64| records.iter().map(f).sum::<f64>() / 5.0;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    assert!(close(ens.metric("accuracy").unwrap().mean, mean(|r| r.accuracy)));
    assert!(close(ens.metric("self_bleu").unwrap().mean, mean(|r| r.self_bleu)));
    assert!(close(ens.metric("ref_bleu").unwrap().mean, mean(|r| r.ref_bleu.unwrap())));
    let m = manifest(&w.path("ens/ensemble.json"));
    assert_eq!(m.seeds, vec![10, 11, 12, 13, 14]);
    assert!(m.verify().unwrap());
}

#[test]
fn reruns_are_byte_identical() {
    let w = Work::prepared();
    let once = |out: &str| {
        let args = [
            "ensemble", "--arch", "combo", "--corpus", &w.p("train.tsv"), "--epochs", "1", "--runs", "2",
            "--out", &w.p(out),
        ];
        assert_eq!(styleval(&args), 0);
    };
    once("a");
    let first = fs::read(w.path("a/run-1/model.json")).unwrap();
    let report = fs::read(w.path("a/ensemble.json")).unwrap();
    once("a");
    assert_eq!(first, fs::read(w.path("a/run-1/model.json")).unwrap());
    assert_eq!(report, fs::read(w.path("a/ensemble.json")).unwrap());
    // the trained classifier is part of the artifacts too
    assert!(w.path("a/classifier.json").exists());
}
