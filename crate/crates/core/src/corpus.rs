//! Program samples, JSONL serialization, deduplication against a training
//! set, type-related splits and training-set filtering by oversampling.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::keyed_rng;
use crate::typecheck::Category;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("sample `{id}` is buggy but has no type_related label")]
    UnlabeledSample { id: String },
    #[error("no non-type-related bugs are available to replace type-related ones")]
    NoReplacementPool,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Correct,
    Buggy,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Correct, Label::Buggy];
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Correct => "correct",
            Label::Buggy => "buggy",
        })
    }
}

/// Ground-truth bug location and repair information.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugRecord {
    pub line: u32,
    /// Absent for real bugs that are only localized to a line.
    pub token_index: Option<usize>,
    pub wrong_var: String,
    pub correct_var: String,
    pub repair_candidates: Vec<String>,
}

/// One function-level program. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSample {
    pub id: String,
    pub repo: String,
    pub file_path: String,
    pub function_signature: String,
    pub source: String,
    pub stubs: Option<String>,
    pub label: Label,
    pub bug: Option<BugRecord>,
    pub type_related: Option<bool>,
    pub matched_categories: Option<Vec<Category>>,
}

impl ProgramSample {
    /// A correct sample with metadata derived from the source.
    pub fn correct(id: impl Into<String>, repo: impl Into<String>, file_path: impl Into<String>, source: impl Into<String>) -> Self {
        let source = source.into();
        ProgramSample {
            id: id.into(),
            repo: repo.into(),
            file_path: file_path.into(),
            function_signature: normalize_signature(&source),
            source,
            stubs: None,
            label: Label::Correct,
            bug: None,
            type_related: None,
            matched_categories: None,
        }
    }

    pub fn is_buggy(&self) -> bool {
        self.label == Label::Buggy
    }

    pub fn dedup_key(&self) -> (String, String, String) {
        (self.repo.clone(), self.file_path.clone(), collapse_whitespace(&self.function_signature))
    }
}

/// Provenance of a generated or filtered corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub name: String,
    pub seed: Option<u64>,
    pub parents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub header: CorpusHeader,
    pub samples: Vec<ProgramSample>,
}

impl Corpus {
    pub fn label_counts(&self) -> BTreeMap<Label, usize> {
        label_counts(&self.samples)
    }
}

pub fn label_counts(samples: &[ProgramSample]) -> BTreeMap<Label, usize> {
    let mut out = BTreeMap::new();
    for s in samples {
        *out.entry(s.label).or_insert(0) += 1;
    }
    out
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First line starting with `def`, whitespace collapsed to single spaces.
pub fn normalize_signature(source: &str) -> String {
    source
        .lines()
        .map(str::trim_start)
        .find(|l| l.starts_with("def ") || l.starts_with("def\t"))
        .map(collapse_whitespace)
        .unwrap_or_default()
}

fn validate(sample: &ProgramSample) -> Result<(), String> {
    match (sample.label, &sample.bug) {
        (Label::Buggy, None) => Err(format!("sample `{}` is buggy but has no bug record", sample.id)),
        (Label::Correct, Some(_)) => Err(format!("sample `{}` is correct but has a bug record", sample.id)),
        _ => Ok(()),
    }
}

pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<ProgramSample>, CorpusError> {
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: ProgramSample = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Schema { line: line_no, message: e.to_string() })?;
        validate(&sample).map_err(|message| CorpusError::Schema { line: line_no, message })?;
        if !ids.insert(sample.id.clone()) {
            return Err(CorpusError::Schema { line: line_no, message: format!("duplicate id `{}`", sample.id) });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn read_jsonl(path: &Path) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    let samples = parse_jsonl(std::io::BufReader::new(file))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Corpus { header: CorpusHeader { name, ..Default::default() }, samples })
}

pub fn write_jsonl_to(samples: &[ProgramSample], mut w: impl Write) -> Result<(), CorpusError> {
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_jsonl_string(samples: &[ProgramSample]) -> String {
    let mut buf = Vec::new();
    write_jsonl_to(samples, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn write_jsonl(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    write_jsonl_to(&corpus.samples, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DedupOutcome {
    pub kept: Vec<ProgramSample>,
    pub removed: Vec<ProgramSample>,
}

impl DedupOutcome {
    /// Fraction of the evaluation samples with `label` that were removed;
    /// `None` when there were none.
    pub fn removed_fraction(&self, label: Label) -> Option<f64> {
        let removed = self.removed.iter().filter(|s| s.label == label).count();
        let total = removed + self.kept.iter().filter(|s| s.label == label).count();
        (total > 0).then(|| removed as f64 / total as f64)
    }
}

/// Removes evaluation samples whose (repo, file path, signature) also
/// occurs in the training corpus.
pub fn dedup(eval: &[ProgramSample], train: &[ProgramSample]) -> DedupOutcome {
    let keys: HashSet<_> = train.iter().map(ProgramSample::dedup_key).collect();
    let (removed, kept) = eval.iter().cloned().partition(|s| keys.contains(&s.dedup_key()));
    DedupOutcome { kept, removed }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TypeSplit {
    pub type_related_bugs: Vec<ProgramSample>,
    pub other_bugs: Vec<ProgramSample>,
    pub correct: Vec<ProgramSample>,
}

pub fn split_by_type_related(samples: &[ProgramSample]) -> Result<TypeSplit, CorpusError> {
    let mut split = TypeSplit::default();
    for s in samples {
        match (s.label, s.type_related) {
            (Label::Correct, _) => split.correct.push(s.clone()),
            (Label::Buggy, Some(true)) => split.type_related_bugs.push(s.clone()),
            (Label::Buggy, Some(false)) => split.other_bugs.push(s.clone()),
            (Label::Buggy, None) => return Err(CorpusError::UnlabeledSample { id: s.id.clone() }),
        }
    }
    Ok(split)
}

/// Replaces every type-related bug with a uniform draw (with replacement)
/// from the remaining bugs. Corpus size, order of the other samples and the
/// label histogram are preserved. Replacements get ids `<source-id>#dupN`.
pub fn filter_train(samples: &[ProgramSample], seed: u64) -> Result<Vec<ProgramSample>, CorpusError> {
    let split = split_by_type_related(samples)?;
    if split.type_related_bugs.is_empty() {
        return Ok(samples.to_vec());
    }
    if split.other_bugs.is_empty() {
        return Err(CorpusError::NoReplacementPool);
    }
    let pool = &split.other_bugs;
    let mut rng = keyed_rng(seed, "filter-train");
    let mut ids: HashSet<String> = samples.iter().map(|s| s.id.clone()).collect();
    let mut dup_counter: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        if s.label == Label::Buggy && s.type_related == Some(true) {
            let source = &pool[rng.gen_range(0..pool.len())];
            let counter = dup_counter.entry(source.id.clone()).or_insert(0);
            let id = loop {
                *counter += 1;
                let candidate = format!("{}#dup{}", source.id, counter);
                if ids.insert(candidate.clone()) {
                    break candidate;
                }
            };
            out.push(ProgramSample { id, ..source.clone() });
        } else {
            out.push(s.clone());
        }
    }
    Ok(out)
}

/// Multiset of matched categories over labeled buggy samples.
pub fn category_histogram(samples: &[ProgramSample]) -> BTreeMap<Category, usize> {
    let mut out = BTreeMap::new();
    for s in samples {
        for c in s.matched_categories.iter().flatten() {
            *out.entry(*c).or_insert(0) += 1;
        }
    }
    out
}

/// Distinct key triples, for reporting.
pub fn key_set(samples: &[ProgramSample]) -> BTreeSet<(String, String, String)> {
    samples.iter().map(ProgramSample::dedup_key).collect()
}
