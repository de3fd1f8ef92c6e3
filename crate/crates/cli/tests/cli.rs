use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bertcaps::corpus_io::corpus_csv;
use bertcaps_core::datapipe::{synth_corpus, SynthSpec};
use serde_json::Value;

const SMALL: &[&str] = &["--epochs", "6", "--d-model", "16", "--layers", "1", "--heads", "2", "--d-ff", "32"];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bertcaps"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn with_small(args: &[&str]) -> Vec<String> {
    args.iter().chain(SMALL).map(|s| s.to_string()).collect()
}

fn run_small(dir: &Path, args: &[&str]) -> Output {
    let args = with_small(args);
    run_ok(dir, &args.iter().map(String::as_str).collect::<Vec<_>>())
}

/// A workspace holding a small synthetic corpus as `corpus.csv`.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { min_words: 4, max_words: 8, ..SynthSpec::with_domains(3, 10) };
    let records = synth_corpus(&spec, 1);
    fs::write(dir.path().join("corpus.csv"), corpus_csv(&records, &spec.domains).unwrap()).unwrap();
    dir
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let line = stderr.lines().find(|l| l.contains("\"error\"")).expect("no error line");
    serde_json::from_str(line).unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

fn read(p: PathBuf) -> Vec<u8> {
    fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn help_exits_zero_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["preprocess", "train", "evaluate", "kfold", "predict", "gradcheck", "dump-h"] {
        let out = run(dir.path(), &[sub, "--help", "--out", "x"]);
        assert!(out.status.success(), "{sub}");
        assert!(!out.stdout.is_empty());
    }
    assert!(run(dir.path(), &["--help"]).status.success());
    assert!(files(dir.path()).is_empty());
}

#[test]
fn usage_errors_exit_one_with_a_json_line() {
    let dir = workspace();
    for args in [&["train", "--bogus"][..], &["frobnicate"], &[], &["kfold", "--data", "corpus.csv", "--out", "o", "--k", "1"]] {
        let out = run(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert_eq!(error_line(&out)["error"], "usage");
    }
}

#[test]
fn data_errors_exit_two_and_name_the_path() {
    let dir = workspace();
    let out = run(dir.path(), &["train", "--data", "missing.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_line(&out);
    assert_eq!(err["error"], "data");
    assert!(err["message"].as_str().unwrap().contains("missing.csv"));

    fs::write(dir.path().join("bad.csv"), "id,domain,text\n1,a,hi\n").unwrap();
    let out = run(dir.path(), &["preprocess", "--data", "bad.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out)["message"].as_str().unwrap().contains("score"));

    fs::write(dir.path().join("ck.json"), "{\"format\": \"nope\"}").unwrap();
    let out = run(dir.path(), &["predict", "--checkpoint", "ck.json", "--data", "corpus.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn gradcheck_passes_and_fails_with_numeric_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(dir.path(), &["gradcheck", "--seed", "7"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let last = stdout.lines().last().unwrap();
    let err: f64 = last.strip_prefix("max_rel_error ").unwrap().parse().unwrap();
    assert!(err < 1e-4);
    assert!(stdout.contains("sentiment.neg.probe") && stdout.contains("encoder.layer1.ff_in"));

    let out = run(dir.path(), &["gradcheck", "--eps", "0.5"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "numeric");
}

#[test]
fn output_directory_needs_force_to_be_replaced() {
    let dir = workspace();
    run_ok(dir.path(), &["preprocess", "--data", "corpus.csv", "--out", "pre"]);
    fs::write(dir.path().join("pre/marker"), "x").unwrap();
    let out = run(dir.path(), &["preprocess", "--data", "corpus.csv", "--out", "pre"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("pre/marker").exists());
    run_ok(dir.path(), &["preprocess", "--data", "corpus.csv", "--out", "pre", "--force"]);
    assert!(!dir.path().join("pre/marker").exists());
    assert!(files(dir.path()).iter().all(|f| !f.contains(".tmp")));
}

#[test]
fn preprocess_is_idempotent() {
    let dir = workspace();
    run_ok(dir.path(), &["preprocess", "--data", "corpus.csv", "--out", "a"]);
    run_ok(dir.path(), &["preprocess", "--data", "a/corpus.csv", "--out", "b"]);
    assert_eq!(read(dir.path().join("a/corpus.csv")), read(dir.path().join("b/corpus.csv")));
    assert_eq!(files(&dir.path().join("a")), ["config.json", "corpus.csv", "run_meta.json", "summary.json"]);
    let summary: Value = serde_json::from_slice(&read(dir.path().join("a/summary.json"))).unwrap();
    assert_eq!(summary["kept"], 60);
    assert_eq!(summary["per_domain"].as_array().unwrap().len(), 3);
}

#[test]
fn train_and_evaluate_are_byte_reproducible() {
    let dir = workspace();
    for out in ["t1", "t2"] {
        run_small(dir.path(), &["train", "--data", "corpus.csv", "--out", out]);
    }
    for name in ["checkpoint.json", "history.csv", "split.csv", "config.json"] {
        assert_eq!(read(dir.path().join("t1").join(name)), read(dir.path().join("t2").join(name)), "{name}");
    }
    let history = String::from_utf8(read(dir.path().join("t1/history.csv"))).unwrap();
    assert!(history.starts_with("epoch,loss,train_acc_sent,train_acc_dom,val_acc_sent,val_acc_dom\n"));

    for out in ["e1", "e2"] {
        run_ok(dir.path(), &["evaluate", "--checkpoint", "t1/checkpoint.json", "--data", "corpus.csv", "--out", out]);
    }
    let e1 = dir.path().join("e1");
    for name in files(&e1).iter().filter(|n| *n != "run_meta.json") {
        assert_eq!(read(e1.join(name)), read(dir.path().join("e2").join(name)), "{name}");
    }
    let report: Value = serde_json::from_slice(&read(e1.join("report.json"))).unwrap();
    assert!(report["polarity"]["train"].is_object());
    let split = String::from_utf8(read(dir.path().join("t1/split.csv"))).unwrap();
    let test_rows = split.lines().filter(|l| l.ends_with(",test")).count() as u64;
    let c = &report["polarity"]["confusion"];
    let total: u64 = ["tp", "fp", "fn", "tn"].iter().map(|k| c[*k].as_u64().unwrap()).sum();
    assert_eq!(total, test_rows);
}

#[test]
fn different_seeds_give_different_checkpoints() {
    let dir = workspace();
    run_small(dir.path(), &["train", "--data", "corpus.csv", "--out", "a", "--seed", "1"]);
    run_small(dir.path(), &["train", "--data", "corpus.csv", "--out", "b", "--seed", "2"]);
    assert_ne!(read(dir.path().join("a/checkpoint.json")), read(dir.path().join("b/checkpoint.json")));
}

#[test]
fn config_file_is_overridden_by_flags_and_echoed() {
    let dir = workspace();
    fs::write(dir.path().join("cfg.json"), r#"{"split_ratio": 0.5, "train": {"epochs": 3, "batch_size": 4}}"#).unwrap();
    run_small(dir.path(), &["train", "--data", "corpus.csv", "--out", "t", "--config", "cfg.json"]);
    let cfg: Value = serde_json::from_slice(&read(dir.path().join("t/config.json"))).unwrap();
    let s = &cfg["settings"];
    assert_eq!(s["split_ratio"], 0.5);
    assert_eq!(s["train"]["batch_size"], 4);
    // --epochs 6 from the command line wins over the file.
    assert_eq!(s["train"]["epochs"], 6);
    let history = String::from_utf8(read(dir.path().join("t/history.csv"))).unwrap();
    assert_eq!(history.lines().count(), 7);
    let meta: Value = serde_json::from_slice(&read(dir.path().join("t/run_meta.json"))).unwrap();
    assert!(meta["argv"].as_array().unwrap().iter().any(|a| a == "cfg.json"));
}

#[test]
fn kfold_writes_the_report_and_is_thread_independent() {
    let dir = workspace();
    run_small(dir.path(), &["kfold", "--data", "corpus.csv", "--k", "3", "--seed", "42", "--out", "k1"]);
    run_small(dir.path(), &["kfold", "--data", "corpus.csv", "--k", "3", "--seed", "42", "--out", "k2", "--threads", "3"]);
    let k1 = dir.path().join("k1");
    assert_eq!(
        files(&k1),
        [
            "config.json",
            "confusion_domain.csv",
            "confusion_polarity.csv",
            "domain_metrics.csv",
            "folds.csv",
            "per_domain_accuracy.csv",
            "polarity_metrics.csv",
            "report.json",
            "run_meta.json",
            "series.json",
            "ttest_domain_p.csv",
            "ttest_domain_t.csv",
            "ttest_p.csv",
            "ttest_t.csv",
        ]
    );
    for name in files(&k1).iter().filter(|n| !["run_meta.json", "config.json", "report.json"].contains(&n.as_str())) {
        assert_eq!(read(k1.join(name)), read(dir.path().join("k2").join(name)), "{name}");
    }
    let series: Value = serde_json::from_slice(&read(k1.join("series.json"))).unwrap();
    assert_eq!(series["polarity"].as_array().unwrap().len(), 3);

    run_small(
        dir.path(),
        &["kfold", "--data", "corpus.csv", "--k", "3", "--seed", "42", "--out", "k3", "--compare", "again=k1/series.json"],
    );
    let report: Value = serde_json::from_slice(&read(dir.path().join("k3/report.json"))).unwrap();
    assert_eq!(report["ttest"]["labels"], serde_json::json!(["bertcaps", "majority", "again"]));
    // Identical series: t = 0 and p = 1 off the diagonal too.
    assert_eq!(report["ttest"]["t"][0][2], 0.0);
    assert_eq!(report["ttest"]["p"][2][0], 1.0);

    let out = run(dir.path(), &["kfold", "--data", "corpus.csv", "--k", "4", "--out", "k4", "--compare", "x=k1/series.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dumped_hidden_states_reproduce_predictions() {
    let dir = workspace();
    run_small(dir.path(), &["train", "--data", "corpus.csv", "--out", "t"]);
    let ck = "t/checkpoint.json";
    run_ok(dir.path(), &["dump-h", "--checkpoint", ck, "--data", "corpus.csv", "--out", "h"]);
    run_ok(dir.path(), &["predict", "--checkpoint", ck, "--data", "corpus.csv", "--out", "p1"]);
    run_ok(dir.path(), &["predict", "--checkpoint", ck, "--hidden", "h/hidden.hdump", "--out", "p2"]);
    let p1 = read(dir.path().join("p1/predictions.csv"));
    assert_eq!(p1, read(dir.path().join("p2/predictions.csv")));
    let text = String::from_utf8(p1).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("id,polarity,domain,p_positive,p_negative,p_domain_"));
    assert_eq!(text.lines().count(), 61);

    // A head-only model trained on the dump evaluates from it as well.
    run_small(dir.path(), &["train", "--data", "corpus.csv", "--hidden", "h/hidden.hdump", "--out", "head"]);
    run_ok(
        dir.path(),
        &["evaluate", "--checkpoint", "head/checkpoint.json", "--data", "corpus.csv", "--hidden", "h/hidden.hdump", "--out", "he"],
    );
    let out = run(dir.path(), &["dump-h", "--checkpoint", "head/checkpoint.json", "--data", "corpus.csv", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_hidden_dump_reports_line_and_offset() {
    let dir = workspace();
    fs::write(dir.path().join("bad.hdump"), "HDUMP v1 1 2\nr0 1\n0.5 nope\n").unwrap();
    run_small(dir.path(), &["train", "--data", "corpus.csv", "--out", "t"]);
    let out = run(dir.path(), &["predict", "--checkpoint", "t/checkpoint.json", "--hidden", "bad.hdump", "--out", "p"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = error_line(&out)["message"].as_str().unwrap().to_string();
    assert!(msg.contains("line 3") && msg.contains("offset 22"), "{msg}");
}
