use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;
use typegate::corpus::{
    dedup, filter_train, label_counts, parse_jsonl, to_jsonl_string, CorpusError, CorpusHeader, Label, ProgramSample,
};
use typegate::detect::{Cascade, Detector, DetectorOutcome, TypecheckDetector};
use typegate::label::label_sample;
use typegate::metrics::{beta_grid, curve_csv, fbeta_curve, report_csv, tally, EvalReport};
use typegate::mutate::{inject_misuse, MutateError};
use typegate::source::parse_source;
use typegate::typecheck::{check, Category, CheckConfig, StubSet};

use crate::output::{manifest_path, usage, RunManifest, Staged};
use crate::{Command, Format};

pub fn run(command: Command, jobs: usize) -> Result<ExitCode> {
    match command {
        Command::Check { file, annotations, stubs, format } => cmd_check(&file, annotations, stubs.as_deref(), format),
        Command::Inject { input, output, seed, rate } => cmd_inject(&input, &output, seed, rate),
        Command::Label { corpus, annotations, out } => cmd_label(&corpus, annotations, out.as_deref()),
        Command::Eval { corpus, detectors, cascade, match_rule, betas, annotations, timeout, out } => {
            let config = CheckConfig::with_annotations(annotations);
            let processes = if jobs == 0 { rayon::current_num_threads() } else { jobs };
            let mut built: Vec<Box<dyn Detector>> = Vec::new();
            for spec in &detectors {
                built.push(spec.build(&config, Duration::from_secs(timeout), processes));
                if cascade {
                    let inner = spec.build(&config, Duration::from_secs(timeout), processes);
                    built.push(Box::new(Cascade::new(TypecheckDetector::new(config.clone()), inner)));
                }
            }
            let settings = json!({
                "detectors": detectors.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
                "cascade": cascade,
                "match": match_rule,
                "betas": betas,
                "annotations": annotations,
                "timeout_s": timeout,
            });
            cmd_eval(&corpus, &built, match_rule, &betas, settings, out.as_deref())
        }
        Command::FilterTrain { corpus, seed, out } => cmd_filter_train(&corpus, seed, &out),
        Command::Dedup { eval, train, out } => cmd_dedup(&eval, &train, &out),
        Command::Fbeta { pairs, grid, out } => cmd_fbeta(&pairs, &grid, out.as_deref()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Vec<ProgramSample>> {
    let text = read_text(path)?;
    parse_jsonl(text.as_bytes()).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Header from the manifest written alongside `corpus`, if any.
fn prior_header(corpus: &Path) -> Option<CorpusHeader> {
    let text = std::fs::read_to_string(manifest_path(corpus)).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    serde_json::from_value(value.get("header")?.clone()).ok()
}

fn corpus_counts(samples: &[ProgramSample]) -> BTreeMap<String, usize> {
    let counts = label_counts(samples);
    Label::ALL.iter().map(|l| (l.to_string(), counts.get(l).copied().unwrap_or(0))).collect()
}

fn cmd_check(file: &Path, annotations: bool, stubs: Option<&Path>, format: Format) -> Result<ExitCode> {
    let source = read_text(file)?;
    let mut config = CheckConfig::with_annotations(annotations);
    let name = file.display();
    if let Some(path) = stubs {
        let text = read_text(path)?;
        match StubSet::parse(&text) {
            Ok(s) => config.stubs = Some(s),
            Err(e) => {
                eprintln!("{}: unanalyzable: {e}", path.display());
                return Ok(ExitCode::from(3));
            }
        }
    }
    let parsed = match parse_source(&source) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{name}:{}: unanalyzable: {e}", e.line());
            return Ok(ExitCode::from(3));
        }
    };
    let diagnostics = check(&parsed.tree, &config);
    match format {
        Format::Human => {
            for d in &diagnostics {
                println!("{name}:{}:{}: {}: {}", d.span.line, d.span.column + 1, d.category, d.message);
            }
        }
        Format::Json => {
            let items: Vec<_> = diagnostics
                .iter()
                .map(|d| {
                    json!({
                        "file": file.display().to_string(),
                        "line": d.span.line,
                        "column": d.span.column + 1,
                        "category": d.category,
                        "message": d.message,
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&items)?);
        }
    }
    Ok(if diagnostics.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_inject(input: &Path, output: &Path, seed: u64, rate: f64) -> Result<ExitCode> {
    let started = Instant::now();
    if !(0.0..=1.0).contains(&rate) {
        return Err(usage(format!("--rate must be within [0, 1], got {rate}")));
    }
    let samples = load(input)?;
    let results: Vec<Option<Result<ProgramSample, MutateError>>> = samples
        .par_iter()
        .map(|s| {
            let chosen = s.label == Label::Correct
                && typegate::keyed_rng(seed, &format!("inject-rate/{}", s.id)).gen::<f64>() < rate;
            chosen.then(|| inject_misuse(s, seed).map(|(variant, _)| variant))
        })
        .collect();

    let mut ids: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let mut variants = Vec::new();
    let mut skipped = 0;
    for r in &results {
        match r {
            Some(Ok(v)) => {
                if !ids.insert(&v.id) {
                    return Err(usage(format!("injected id `{}` already exists in the input", v.id)));
                }
                variants.push(v.clone());
            }
            Some(Err(e)) => {
                eprintln!("skipped: {e}");
                skipped += 1;
            }
            None => {}
        }
    }
    let injected = variants.len();
    let mut all = samples;
    all.extend(variants);

    let mut manifest = RunManifest::new("inject", json!({ "rate": rate }), Some(seed), &[input]);
    manifest.header = Some(CorpusHeader { name: stem(output), seed: Some(seed), parents: vec![stem(input)] });
    manifest.counts = corpus_counts(&all);
    manifest.counts.insert("injected".into(), injected);
    manifest.counts.insert("skipped".into(), skipped);
    let mut staged = Staged::default();
    staged.add_with_manifest(output, to_jsonl_string(&all).as_bytes(), manifest, started)?;
    staged.commit()?;
    eprintln!("injected {injected} variants ({skipped} samples without injection sites)");
    Ok(ExitCode::SUCCESS)
}

fn cmd_label(corpus: &Path, annotations: bool, out: Option<&Path>) -> Result<ExitCode> {
    let started = Instant::now();
    let mut samples = load(corpus)?;
    let config = CheckConfig::with_annotations(annotations);
    let results: Vec<_> = samples
        .par_iter()
        .map(|s| if s.label == Label::Buggy { label_sample(s, &config).map(Some) } else { Ok(None) })
        .collect::<Result<_, _>>()
        .map_err(|e| usage(e.to_string()))?;

    let mut histogram: BTreeMap<Category, usize> = BTreeMap::new();
    let (mut related, mut buggy, mut audited) = (0, 0, 0);
    for (s, r) in samples.iter_mut().zip(results) {
        let Some(r) = r else { continue };
        buggy += 1;
        related += usize::from(r.type_related);
        if let Some(reason) = &r.audit {
            audited += 1;
            eprintln!("audit: {}: {reason}", s.id);
        }
        for c in &r.matched_categories {
            *histogram.entry(*c).or_insert(0) += 1;
        }
        s.type_related = Some(r.type_related);
        s.matched_categories = Some(r.matched_categories);
    }

    let target = out.unwrap_or(corpus);
    // Labeling adds fields but keeps the corpus identity, so provenance
    // recorded by an earlier run carries over.
    let prior = prior_header(corpus);
    let seed = prior.as_ref().and_then(|h| h.seed);
    let parents = match prior {
        Some(h) if target == corpus => h.parents,
        _ => vec![stem(corpus)],
    };
    let mut manifest = RunManifest::new("label", json!({ "annotations": annotations }), seed, &[corpus]);
    manifest.header = Some(CorpusHeader { name: stem(target), seed, parents });
    manifest.counts = corpus_counts(&samples);
    manifest.counts.insert("type_related".into(), related);
    manifest.counts.insert("audited".into(), audited);
    for (c, n) in &histogram {
        manifest.counts.insert(format!("category:{c}"), *n);
    }
    let mut staged = Staged::default();
    staged.add_with_manifest(target, to_jsonl_string(&samples).as_bytes(), manifest, started)?;
    staged.commit()?;

    for (c, n) in &histogram {
        println!("{c}\t{n}");
    }
    eprintln!("{related} of {buggy} buggy samples are type-related ({audited} unanalyzable)");
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(
    corpus: &Path,
    detectors: &[Box<dyn Detector>],
    rule: typegate::metrics::MatchRule,
    betas: &[f64],
    settings: serde_json::Value,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let started = Instant::now();
    if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(usage(format!("--beta must be positive, got {b}")));
    }
    let samples = load(corpus)?;
    let corpus_name = stem(corpus);
    let mut reports = Vec::new();
    for detector in detectors {
        let outcomes: HashMap<String, DetectorOutcome> = samples
            .par_iter()
            .map(|s| {
                detector
                    .detect(s)
                    .map(|o| (s.id.clone(), o))
                    .with_context(|| format!("{} on `{}`", detector.name(), s.id))
            })
            .collect::<Result<_>>()?;
        let counts = tally(&outcomes, &samples, rule)?;
        reports.push(EvalReport::new(detector.name(), corpus_name.clone(), counts, betas));
    }
    let csv = report_csv(&reports)?;
    match out {
        Some(path) => {
            let mut manifest = RunManifest::new("eval", settings, None, &[corpus]);
            manifest.counts = corpus_counts(&samples);
            let mut staged = Staged::default();
            staged.add_with_manifest(path, csv.as_bytes(), manifest, started)?;
            staged.commit()?;
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_filter_train(corpus: &Path, seed: u64, out: &Path) -> Result<ExitCode> {
    let started = Instant::now();
    let samples = load(corpus)?;
    let filtered = filter_train(&samples, seed).map_err(|e| match e {
        CorpusError::UnlabeledSample { .. } => usage(format!("{e}; run `typegate label` first")),
        e => anyhow::Error::from(e),
    })?;
    let replaced = samples.iter().filter(|s| s.type_related == Some(true)).count();
    let mut manifest = RunManifest::new("filter-train", json!({}), Some(seed), &[corpus]);
    manifest.header = Some(CorpusHeader { name: stem(out), seed: Some(seed), parents: vec![stem(corpus)] });
    manifest.counts = corpus_counts(&filtered);
    manifest.counts.insert("replaced".into(), replaced);
    let mut staged = Staged::default();
    staged.add_with_manifest(out, to_jsonl_string(&filtered).as_bytes(), manifest, started)?;
    staged.commit()?;
    eprintln!("replaced {replaced} type-related bugs");
    Ok(ExitCode::SUCCESS)
}

fn cmd_dedup(eval: &Path, train: &Path, out: &Path) -> Result<ExitCode> {
    let started = Instant::now();
    let eval_samples = load(eval)?;
    let train_samples = load(train)?;
    let outcome = dedup(&eval_samples, &train_samples);
    let mut manifest = RunManifest::new("dedup", json!({}), None, &[eval, train]);
    manifest.header = Some(CorpusHeader { name: stem(out), seed: None, parents: vec![stem(eval), stem(train)] });
    manifest.counts = corpus_counts(&outcome.kept);
    manifest.counts.insert("removed".into(), outcome.removed.len());
    let mut staged = Staged::default();
    staged.add_with_manifest(out, to_jsonl_string(&outcome.kept).as_bytes(), manifest, started)?;
    staged.commit()?;

    println!("label\tremoved\tfraction");
    for label in Label::ALL {
        let removed = outcome.removed.iter().filter(|s| s.label == label).count();
        let fraction = outcome.removed_fraction(label).map_or("NA".to_string(), |f| format!("{f:.4}"));
        println!("{label}\t{removed}\t{fraction}");
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Deserialize)]
struct PairRow {
    label: String,
    precision: f64,
    recall: f64,
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("invalid grid `{spec}` (expected START:END:STEP)")))?;
    match parts[..] {
        [start, end, step] if start > 0.0 && step > 0.0 && end >= start && (end - start) / step <= 1e6 => {
            Ok(beta_grid(start, end, step))
        }
        _ => Err(usage(format!("invalid grid `{spec}` (need 0 < START <= END and STEP > 0)"))),
    }
}

fn cmd_fbeta(pairs: &Path, grid: &str, out: Option<&Path>) -> Result<ExitCode> {
    let started = Instant::now();
    let betas = parse_grid(grid)?;
    let text = read_text(pairs)?;
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize::<PairRow>() {
        let row = row.map_err(|e| usage(format!("{}: {e}", pairs.display())))?;
        for v in [row.precision, row.recall] {
            if !(0.0..=1.0).contains(&v) {
                return Err(usage(format!("{}: `{}` has a value outside [0, 1]", pairs.display(), row.label)));
            }
        }
        rows.push((row.label, row.precision, row.recall));
    }
    if rows.is_empty() {
        return Err(usage(format!("{}: no pairs", pairs.display())));
    }
    let curve = curve_csv(&fbeta_curve(&rows, &betas))?;
    match out {
        Some(path) => {
            let mut manifest = RunManifest::new("fbeta", json!({ "grid": grid }), None, &[pairs]);
            manifest.counts.insert("pairs".into(), rows.len());
            manifest.counts.insert("betas".into(), betas.len());
            let mut staged = Staged::default();
            staged.add_with_manifest(path, curve.as_bytes(), manifest, started)?;
            staged.commit()?;
        }
        None => print!("{curve}"),
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.5:1.5:0.5").unwrap(), vec![0.5, 1.0, 1.5]);
        for bad in ["1:2", "0:1:0.1", "2:1:0.1", "1:2:0", "a:b:c"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}
