use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rstparse::evaluation::ScoreReport;
use rstparse::treebank::read_corpus;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rstparse"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synthetic_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic")
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn ingest(dir: &Path) -> String {
    let out = p(dir, "corpus.jsonl");
    ok(&["ingest", synthetic_dir().to_str().unwrap(), "--out", &out]);
    out
}

#[test]
fn ingest_bundled_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = read_corpus(Path::new(&ingest(dir.path()))).unwrap();
    assert_eq!(corpus.len(), 20);
    assert_eq!(corpus.iter().filter(|r| r.doc.lang == "pt").count(), 10);
    for r in &corpus {
        let tree = r.gold().unwrap();
        assert_eq!(tree.leaf_count(), r.doc.edu_count());
        tree.for_each_node(&mut |n| assert!(n.rel.is_coarse(), "{}: {:?}", r.doc.doc_id, n.rel));
        let expected = if r.doc.lang == "pt" { "Pt-DT" } else { "En-DT" };
        assert_eq!(r.doc.source_treebank, expected);
    }
}

#[test]
fn ingest_reports_bad_files_but_keeps_good_ones() {
    let dir = tempfile::tempdir().unwrap();
    let good = synthetic_dir().join("en_01.rs3");
    let bad = dir.path().join("en_bad.dis");
    std::fs::write(&bad, "( Root (span 1 2) ( Nucleus (leaf 1) (text _!a_!) )").unwrap();
    let out = p(dir.path(), "c.jsonl");
    let res = run(&["ingest", good.to_str().unwrap(), bad.to_str().unwrap(), "--out", &out]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("en_bad.dis"));
    assert_eq!(read_corpus(Path::new(&out)).unwrap().len(), 1);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["train"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let corpus = ingest(dir.path());
    let bad_set = run(&["train", "--train", &corpus, "--toy", "--set", "no_such_key=1"]);
    assert_eq!(bad_set.status.code(), Some(2));
    let bad_value = run(&["train", "--train", &corpus, "--toy", "--set", "dropout=1.5"]);
    assert_eq!(bad_value.status.code(), Some(2));
}

#[test]
fn missing_input_exits_1() {
    let res = run(&["evaluate", "--gold", "/nonexistent/g.jsonl", "--pred", "/nonexistent/p.jsonl"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nonexistent"));
}

#[test]
fn mfs_parse_and_class_macro_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = ingest(dir.path());
    let pred = p(dir.path(), "mfs.jsonl");
    ok(&["parse", "--mfs", &corpus, "--in", &corpus, "--out", &pred]);
    let report_path = p(dir.path(), "out/report.json");
    let out = ok(&[
        "evaluate", "--gold", &corpus, "--pred", &pred, "--no-root", "--macro-mode", "class", "--out", &report_path,
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("all"));
    let report: ScoreReport = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.pooled.documents, 20);
    let s = report.pooled.micro_f1;
    assert!(s.sp >= s.nu && s.sp >= s.rel);
}

#[test]
fn segment_translation_training_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = ingest(dir.path());
    let config = dir.path().join("train.cfg");
    std::fs::write(&config, "# toy run\nepochs = 2\nd_emb = 8\nd_hidden = 8\nd_label = 8\n").unwrap();
    let run_dir = p(dir.path(), "run");
    let cache = p(dir.path(), "cache.jsonl");
    ok(&[
        "train", "--config", config.to_str().unwrap(), "--train", &corpus, "--toy", "--strategy",
        "segment-translation", "--target", "en", "--client", "identity", "--cache", &cache, "--run-dir", &run_dir,
    ]);
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/record.json")).unwrap()).unwrap();
    assert_eq!(record["epochs"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("run/checkpoints/best.json").exists());
    assert!(!std::fs::read_to_string(&cache).unwrap().is_empty());

    let parser = rstparse::model::Parser::load(&dir.path().join("run/model.json")).unwrap();
    assert_eq!(parser.hp.d_emb, 8);
    assert_eq!(parser.hp.epochs, 2);
}

#[test]
fn translate_with_dictionary_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = ingest(dir.path());
    let dict = dir.path().join("pt-en.tsv");
    std::fs::write(&dict, "pesquisadores\tresearchers\nexperimento\texperiment\n").unwrap();
    let out = p(dir.path(), "en.jsonl");
    let cache = p(dir.path(), "cache.jsonl");
    let client = format!("dictionary:{}", dict.display());
    ok(&["translate", "--target", "en", "--client", &client, "--in", &corpus, "--out", &out, "--cache", &cache]);
    let before = read_corpus(Path::new(&corpus)).unwrap();
    let after = read_corpus(Path::new(&out)).unwrap();
    assert_eq!(before.len(), after.len());
    for (a, b) in before.iter().zip(&after) {
        assert_eq!(a.tree, b.tree);
        assert_eq!(a.doc.edu_count(), b.doc.edu_count());
        assert_eq!(b.doc.lang, "en");
    }
    let text: String = after.iter().flat_map(|r| r.doc.edu_texts()).collect::<Vec<_>>().join(" ");
    assert!(text.contains("researchers") && !text.contains("pesquisadores"));
    let lines = std::fs::read_to_string(&cache).unwrap().lines().count();
    ok(&["translate", "--target", "en", "--client", &client, "--in", &corpus, "--out", &out, "--cache", &cache]);
    assert_eq!(std::fs::read_to_string(&cache).unwrap().lines().count(), lines);
}

#[test]
fn analyze_writes_svg_and_topics() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = ingest(dir.path());
    let svg = p(dir.path(), "plots/topics.svg");
    ok(&["analyze", "--in", &corpus, "--k", "2", "--project", "pca", "--iterations", "100", "--out", &svg]);
    let topics: rstparse::analysis::AnalysisResult =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("plots/topics.json")).unwrap()).unwrap();
    assert_eq!(topics.k, 2);
    assert_eq!(topics.documents.len(), 20);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
}

#[test]
fn sweep_over_two_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = ingest(dir.path());
    let run_dir = p(dir.path(), "sweep");
    let out = ok(&[
        "sweep", "--train", &corpus, "--test", &corpus, "--seeds", "1,2", "--toy", "--epochs", "1", "--run-dir",
        &run_dir,
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("seed 1") && stdout.contains("seed 2") && stdout.contains("mean over seeds"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep/sweep.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
}
