#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use serde_json::Value;
use tempfile::TempDir;
use typegate::corpus::{parse_jsonl, to_jsonl_string, BugRecord, Label, ProgramSample};
use typegate::label::label_corpus;
use typegate::metrics::f_beta;
use typegate::typecheck::CheckConfig;

const TYPEGATE: &str = env!("CARGO_BIN_EXE_typegate");
const ECHO: &str = env!("CARGO_BIN_EXE_echo-detector");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(TYPEGATE).args(args).current_dir(dir).env_remove("TYPEGATE_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn write_corpus(dir: &Path, name: &str, samples: &[ProgramSample]) -> PathBuf {
    write(dir, name, &to_jsonl_string(samples))
}

fn read_corpus(path: &Path) -> Vec<ProgramSample> {
    parse_jsonl(std::fs::read(path).unwrap().as_slice()).unwrap()
}

fn manifest(path: &Path) -> Value {
    let mut name = path.file_name().unwrap().to_os_string();
    name.push(".manifest.json");
    serde_json::from_slice(&std::fs::read(path.with_file_name(name)).unwrap()).unwrap()
}

fn clean_corpus() -> Vec<ProgramSample> {
    CLEAN.iter().enumerate().map(|(i, src)| sample(format!("c{i}"), src)).collect()
}

fn listing_sample() -> ProgramSample {
    let mut s = sample("listing", &listing_buggy());
    s.label = Label::Buggy;
    s.bug = Some(BugRecord {
        line: 8,
        token_index: None,
        wrong_var: "first".into(),
        correct_var: "last".into(),
        repair_candidates: vec!["source".into(), "assn".into(), "last".into()],
    });
    s
}

fn csv_rows(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<String> = split_csv(lines.next().unwrap());
    lines.map(|l| header.iter().cloned().zip(split_csv(l)).collect()).collect()
}

/// Splits one CSV record, honoring double-quoted fields.
fn split_csv(line: &str) -> Vec<String> {
    let (mut fields, mut cur, mut quoted) = (Vec::new(), String::new(), false);
    for ch in line.chars() {
        match ch {
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

#[test]
fn check_exit_codes_and_formats() {
    let dir = TempDir::new().unwrap();
    let clean = write(dir.path(), "clean.py", CLEAN[0]);
    let buggy = write(dir.path(), "buggy.py", &listing_buggy());
    write(dir.path(), "broken.py", "def f(:\n    return\n");

    let ok = run(dir.path(), &["check", clean.to_str().unwrap()]);
    assert_eq!((code(&ok), stdout(&ok)), (0, String::new()));

    let bad = run(dir.path(), &["check", "buggy.py"]);
    assert_eq!(code(&bad), 1);
    let out = stdout(&bad);
    assert!(out.starts_with("buggy.py:8:"), "{out}");
    assert!(out.contains(": unsupported-operand: "), "{out}");
    assert_eq!(out.lines().count(), 1);

    let json = run(dir.path(), &["check", "--format", "json", buggy.to_str().unwrap()]);
    assert_eq!(code(&json), 1);
    let v: Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v[0]["line"], 8);
    assert_eq!(v[0]["category"], "unsupported-operand");

    assert_eq!(code(&run(dir.path(), &["check", "missing.py"])), 2);
    assert_eq!(code(&run(dir.path(), &["check", "--format", "xml", "clean.py"])), 2);
    assert_eq!(code(&run(dir.path(), &["check", "broken.py"])), 3);
    write(dir.path(), "bad.pyi", "def helper(:\n");
    assert_eq!(code(&run(dir.path(), &["check", "--stubs", "bad.pyi", "clean.py"])), 3);
}

#[test]
fn check_annotations_and_stubs() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "ret.py", "def f(name: str) -> int:\n    return name\n");
    assert_eq!(code(&run(dir.path(), &["check", "ret.py"])), 0);
    let on = run(dir.path(), &["check", "--annotations", "ret.py"]);
    assert_eq!(code(&on), 1);
    assert!(stdout(&on).contains("ret.py:2:") && stdout(&on).contains("bad-return-type"));

    write(dir.path(), "uses.py", "def f(p):\n    n = helper(p)\n    return n.upper()\n");
    write(dir.path(), "helper.pyi", "def helper(x: str) -> int: ...\n");
    let without = run(dir.path(), &["check", "uses.py"]);
    assert!(stdout(&without).contains("name-error"));
    let with = run(dir.path(), &["check", "--stubs", "helper.pyi", "uses.py"]);
    assert_eq!(code(&with), 1);
    assert!(stdout(&with).contains("uses.py:3:") && stdout(&with).contains("attribute-error"), "{}", stdout(&with));
}

#[test]
fn inject_is_reproducible_and_writes_manifest() {
    let dir = TempDir::new().unwrap();
    write_corpus(dir.path(), "in.jsonl", &clean_corpus());
    for out in ["a.jsonl", "b.jsonl"] {
        let o = run(dir.path(), &["inject", "in.jsonl", out, "--seed", "11"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.jsonl")).unwrap());

    let samples = read_corpus(&dir.path().join("a.jsonl"));
    assert_eq!(samples.len(), 2 * CLEAN.len());
    assert_eq!(&samples[..CLEAN.len()], &clean_corpus()[..]);
    for (orig, bug) in samples[..CLEAN.len()].iter().zip(&samples[CLEAN.len()..]) {
        assert_eq!(bug.id, format!("{}#misuse", orig.id));
        assert!(bug.is_buggy());
        let b = bug.bug.as_ref().unwrap();
        let line = bug.source.lines().nth(b.line as usize - 1).unwrap();
        assert!(line.contains(&b.wrong_var) && b.wrong_var != b.correct_var);
    }

    let m = manifest(&dir.path().join("a.jsonl"));
    assert_eq!(m["command"], "inject");
    assert_eq!(m["seed"], 11);
    assert_eq!(m["header"]["parents"][0], "in");
    assert_eq!(m["counts"]["buggy"], CLEAN.len());
    assert_eq!(m["counts"]["correct"], CLEAN.len());

    let other = run(dir.path(), &["inject", "in.jsonl", "c.jsonl", "--seed", "12"]);
    assert_eq!(code(&other), 0);
    assert_ne!(a, std::fs::read(dir.path().join("c.jsonl")).unwrap());
}

#[test]
fn inject_seed_from_environment_and_rate() {
    let dir = TempDir::new().unwrap();
    write_corpus(dir.path(), "in.jsonl", &clean_corpus());
    assert_eq!(code(&run(dir.path(), &["inject", "in.jsonl", "x.jsonl"])), 2);
    assert!(!dir.path().join("x.jsonl").exists());

    let env = Command::new(TYPEGATE)
        .args(["inject", "in.jsonl", "env.jsonl"])
        .env("TYPEGATE_SEED", "11")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&env), 0);
    run(dir.path(), &["inject", "in.jsonl", "flag.jsonl", "--seed", "11"]);
    assert_eq!(std::fs::read(dir.path().join("env.jsonl")).unwrap(), std::fs::read(dir.path().join("flag.jsonl")).unwrap());

    run(dir.path(), &["inject", "in.jsonl", "none.jsonl", "--seed", "3", "--rate", "0"]);
    assert_eq!(read_corpus(&dir.path().join("none.jsonl")), clean_corpus());
    run(dir.path(), &["inject", "in.jsonl", "half.jsonl", "--seed", "3", "--rate", "0.5"]);
    let n = read_corpus(&dir.path().join("half.jsonl")).len() - CLEAN.len();
    assert!(n > 0 && n < CLEAN.len(), "{n}");
    assert_eq!(code(&run(dir.path(), &["inject", "in.jsonl", "y.jsonl", "--seed", "3", "--rate", "1.5"])), 2);
}

#[test]
fn label_histogram_matches_library_on_fixture() {
    let dir = TempDir::new().unwrap();
    let mut samples = injected(CLEAN, 50, 5, "b");
    samples.push(listing_sample());
    samples.extend(clean_corpus());
    let path = write_corpus(dir.path(), "fixture.jsonl", &samples);

    let o = run(dir.path(), &["--jobs", "3", "label", "fixture.jsonl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut oracle = samples.clone();
    let histogram = label_corpus(&mut oracle, &CheckConfig::default());
    let expected: String = histogram.iter().map(|(c, n)| format!("{c}\t{n}\n")).collect();
    assert_eq!(stdout(&o), expected);
    assert!(histogram[&typegate::typecheck::Category::UnsupportedOperand] >= 1);
    assert_eq!(read_corpus(&path), oracle);

    // Single-threaded rerun on the labeled output is a fixed point.
    let before = std::fs::read(&path).unwrap();
    assert_eq!(code(&run(dir.path(), &["--jobs", "1", "label", "fixture.jsonl"])), 0);
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[test]
fn label_edge_cases_and_provenance() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "empty.jsonl", "");
    let o = run(dir.path(), &["label", "empty.jsonl"]);
    assert_eq!((code(&o), stdout(&o)), (0, String::new()));

    write_corpus(dir.path(), "in.jsonl", &clean_corpus()[..4]);
    run(dir.path(), &["inject", "in.jsonl", "inj.jsonl", "--seed", "9"]);
    assert_eq!(code(&run(dir.path(), &["label", "inj.jsonl"])), 0);
    let m = manifest(&dir.path().join("inj.jsonl"));
    assert_eq!(m["command"], "label");
    assert_eq!(m["header"]["seed"], 9);
    assert_eq!(m["header"]["parents"][0], "in");

    write(dir.path(), "broken.jsonl", "{\"id\":1}\n");
    assert_eq!(code(&run(dir.path(), &["label", "broken.jsonl"])), 2);
    assert_eq!(std::fs::read_to_string(dir.path().join("broken.jsonl")).unwrap(), "{\"id\":1}\n");
}

fn eval_fixture(dir: &Path) -> PathBuf {
    let mut samples = injected(CLEAN, 30, 21, "b");
    samples.push(listing_sample());
    samples.extend(clean_corpus());
    write_corpus(dir, "eval.jsonl", &samples)
}

#[test]
fn eval_reports_alone_and_cascade_rows() {
    let dir = TempDir::new().unwrap();
    eval_fixture(dir.path());
    let o = run(dir.path(), &["eval", "eval.jsonl", "--detector", "heuristic", "--detector", "typecheck", "--cascade", "--beta", "2", "--out", "r.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(text.starts_with("detector,corpus,tp,fp,fn,tn,precision,recall,f1.0,f1.5,f2.0\n"));
    let rows = csv_rows(&text);
    let names: Vec<&str> = rows.iter().map(|r| r["detector"].as_str()).collect();
    assert_eq!(names, ["heuristic:0.5", "cascade(typecheck,heuristic:0.5)", "typecheck", "cascade(typecheck,typecheck)"]);

    let n = |r: &BTreeMap<String, String>, k: &str| r[k].parse::<u64>().unwrap();
    for r in &rows {
        assert_eq!(r["corpus"], "eval");
        assert_eq!(n(r, "tp") + n(r, "fp") + n(r, "fn") + n(r, "tn"), 30 + 1 + CLEAN.len() as u64);
        let (p, rc) = (r["precision"].parse::<f64>().unwrap() / 100.0, r["recall"].parse::<f64>().unwrap() / 100.0);
        for (col, beta) in [("f1.0", 1.0), ("f1.5", 1.5), ("f2.0", 2.0)] {
            let emitted: f64 = r[col].parse().unwrap();
            assert!((emitted - 100.0 * f_beta(p, rc, beta).unwrap()).abs() <= 0.01, "{col} {r:?}");
        }
    }
    let flags = |r: &BTreeMap<String, String>| n(r, "tp") + n(r, "fp");
    assert!(flags(&rows[1]) >= flags(&rows[0]));
    assert!(n(&rows[2], "tp") >= 1, "the type checker finds the listing bug");

    let m = manifest(&dir.path().join("r.csv"));
    assert_eq!(m["command"], "eval");
    assert_eq!(m["config"]["cascade"], true);

    let again = run(dir.path(), &["--jobs", "1", "eval", "eval.jsonl", "--detector", "heuristic", "--detector", "typecheck", "--cascade", "--beta", "2"]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn eval_with_external_detector() {
    let dir = TempDir::new().unwrap();
    eval_fixture(dir.path());
    let spec = format!("external:{ECHO} fire-last");
    let o = run(dir.path(), &["--jobs", "4", "eval", "eval.jsonl", "--detector", &spec, "--cascade"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["tn"], "0", "always fires");
    assert_eq!(rows[0]["fn"], "0");

    let never = run(dir.path(), &["eval", "eval.jsonl", "--detector", &format!("external:{ECHO} never")]);
    let rows = csv_rows(&stdout(&never));
    assert_eq!((rows[0]["tp"].as_str(), rows[0]["fp"].as_str(), rows[0]["precision"].as_str()), ("0", "0", "NA"));

    for (mode, expect) in [("invalid", "protocol"), ("crash", "crashed"), ("no-ready", "timed out")] {
        let o = run(dir.path(), &["eval", "eval.jsonl", "--timeout", "1", "--detector", &format!("external:{ECHO} {mode}"), "--out", "x.csv"]);
        assert_eq!(code(&o), 3, "{mode}");
        let err = String::from_utf8_lossy(&o.stderr).to_lowercase();
        assert!(err.contains(expect), "{mode}: {err}");
        assert!(!dir.path().join("x.csv").exists(), "no partial output");
        assert!(!dir.path().join("x.csv.manifest.json").exists());
    }
    let o = run(dir.path(), &["eval", "eval.jsonl", "--detector", "external:/nonexistent/detector"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&run(dir.path(), &["eval", "eval.jsonl", "--detector", "magic"])), 2);
    assert_eq!(code(&run(dir.path(), &["eval", "eval.jsonl"])), 2);
}

#[test]
fn eval_token_matching() {
    let dir = TempDir::new().unwrap();
    let mut s = listing_sample();
    s.bug.as_mut().unwrap().token_index = Some(999);
    write_corpus(dir.path(), "t.jsonl", &[s]);
    let line = run(dir.path(), &["eval", "t.jsonl", "--detector", "typecheck"]);
    assert_eq!(csv_rows(&stdout(&line))[0]["tp"], "1");
    let token = run(dir.path(), &["eval", "t.jsonl", "--detector", "typecheck", "--match", "token"]);
    assert_eq!(csv_rows(&stdout(&token))[0]["fp"], "1");
}

#[test]
fn filter_train_and_dedup() {
    let dir = TempDir::new().unwrap();
    let mut train = injected(CLEAN, 40, 8, "t");
    train.push(listing_sample());
    write_corpus(dir.path(), "train.jsonl", &train);
    let unlabeled = run(dir.path(), &["filter-train", "train.jsonl", "--seed", "1", "--out", "f.jsonl"]);
    assert_eq!(code(&unlabeled), 2);
    assert!(!dir.path().join("f.jsonl").exists());

    assert_eq!(code(&run(dir.path(), &["label", "train.jsonl"])), 0);
    let labeled = read_corpus(&dir.path().join("train.jsonl"));
    let related = labeled.iter().filter(|s| s.type_related == Some(true)).count();
    assert!(related >= 1);
    assert_eq!(code(&run(dir.path(), &["filter-train", "train.jsonl", "--seed", "1", "--out", "f.jsonl"])), 0);
    let filtered = read_corpus(&dir.path().join("f.jsonl"));
    assert_eq!(filtered.len(), labeled.len());
    assert!(filtered.iter().all(|s| s.type_related == Some(false)));
    assert_eq!(filtered.iter().filter(|s| s.id.contains("#dup")).count(), related);
    let m = manifest(&dir.path().join("f.jsonl"));
    assert_eq!((m["seed"].as_u64(), m["counts"]["replaced"].as_u64()), (Some(1), Some(related as u64)));
    run(dir.path(), &["filter-train", "train.jsonl", "--seed", "1", "--out", "g.jsonl"]);
    assert_eq!(std::fs::read(dir.path().join("f.jsonl")).unwrap(), std::fs::read(dir.path().join("g.jsonl")).unwrap());

    // Dedup: two of the four correct evaluation functions also occur in training.
    let eval: Vec<ProgramSample> = clean_corpus()[..4].to_vec();
    let train_overlap: Vec<ProgramSample> =
        CLEAN[..2].iter().enumerate().map(|(i, src)| ProgramSample { repo: "fixture".into(), ..sample(format!("x{i}"), src) }).collect();
    write_corpus(dir.path(), "e.jsonl", &eval);
    write_corpus(dir.path(), "tr.jsonl", &train_overlap);
    let o = run(dir.path(), &["dedup", "e.jsonl", "tr.jsonl", "--out", "d.jsonl"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "label\tremoved\tfraction\ncorrect\t2\t0.5000\nbuggy\t0\tNA\n");
    assert_eq!(read_corpus(&dir.path().join("d.jsonl")), eval[2..].to_vec());
    assert_eq!(manifest(&dir.path().join("d.jsonl"))["header"]["parents"], serde_json::json!(["e", "tr"]));
}

#[test]
fn fbeta_curve_output() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "pairs.csv", "label,precision,recall\nNN,0.6,0.4\nPipeline,0.55,0.45\n");
    let o = run(dir.path(), &["fbeta", "--pairs", "pairs.csv", "--grid", "0.5:2:0.5", "--out", "curve.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&std::fs::read_to_string(dir.path().join("curve.csv")).unwrap());
    assert_eq!(rows.len(), 8);
    for r in &rows {
        let (p, rc) = if r["label"] == "NN" { (0.6, 0.4) } else { (0.55, 0.45) };
        let beta: f64 = r["beta"].parse().unwrap();
        let score: f64 = r["score"].parse().unwrap();
        assert!((score - 100.0 * f_beta(p, rc, beta).unwrap()).abs() <= 0.005, "{r:?}");
    }
    let nn: Vec<f64> = rows[..4].iter().map(|r| r["score"].parse().unwrap()).collect();
    assert!(nn.windows(2).all(|w| w[1] < w[0]), "precision > recall: F-β falls with β");
    assert_eq!(manifest(&dir.path().join("curve.csv"))["counts"]["betas"], 4);

    assert_eq!(code(&run(dir.path(), &["fbeta", "--pairs", "pairs.csv", "--grid", "0:1:0.1"])), 2);
    write(dir.path(), "bad.csv", "label,precision,recall\nNN,60,40\n");
    assert_eq!(code(&run(dir.path(), &["fbeta", "--pairs", "bad.csv"])), 2);
    assert_eq!(code(&run(dir.path(), &["fbeta", "--pairs", "nope.csv"])), 2);
}
