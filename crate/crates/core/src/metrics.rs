//! Localization-aware confusion counts, precision/recall, F-β, relative
//! change and the β at which two detectors' F-β scores cross.
//!
//! Rates are fractions in `[0, 1]`; reports render them as percentages.
//! Undefined values (zero denominators) are `None`, printed as `NA`.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BugRecord, Label, ProgramSample};
use crate::detect::{DetectorOutcome, Location};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no detector outcome for sample `{id}`")]
    MissingOutcome { id: String },
    #[error("relative change from zero is undefined")]
    DivisionByZero,
    #[error("no crossover: one detector dominates in both precision and recall")]
    NoCrossover,
}

/// How a reported location is compared with the true bug location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchRule {
    #[default]
    Line,
    /// Token index equality; bugs known only by line fall back to the line.
    Token,
}

impl FromStr for MatchRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "line" => Ok(MatchRule::Line),
            "token" => Ok(MatchRule::Token),
            _ => Err(format!("unknown match rule `{s}` (expected line or token)")),
        }
    }
}

impl MatchRule {
    pub fn matches(self, bug: &BugRecord, at: &Location) -> bool {
        match (self, bug.token_index) {
            (MatchRule::Token, Some(t)) => at.token_index == Some(t),
            _ => at.line == bug.line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl EvalCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        EvalCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }
}

impl Add for EvalCounts {
    type Output = EvalCounts;

    fn add(self, o: EvalCounts) -> EvalCounts {
        EvalCounts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_, self.tn + o.tn)
    }
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, o: EvalCounts) {
        *self = *self + o;
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Contribution of one sample.
pub fn classify(sample: &ProgramSample, outcome: &DetectorOutcome, rule: MatchRule) -> EvalCounts {
    let faulty = sample.label == Label::Buggy;
    let located = match (&sample.bug, &outcome.location) {
        (Some(bug), Some(at)) => rule.matches(bug, at),
        _ => false,
    };
    match (faulty, outcome.has_bug) {
        (true, true) if located => EvalCounts::new(1, 0, 0, 0),
        (_, true) => EvalCounts::new(0, 1, 0, 0),
        (true, false) => EvalCounts::new(0, 0, 1, 0),
        (false, false) => EvalCounts::new(0, 0, 0, 1),
    }
}

/// A detection on a faulty program at the wrong location is a false
/// positive, not a true positive.
pub fn tally(
    outcomes: &HashMap<String, DetectorOutcome>,
    samples: &[ProgramSample],
    rule: MatchRule,
) -> Result<EvalCounts, MetricsError> {
    let mut counts = EvalCounts::default();
    for s in samples {
        let o = outcomes.get(&s.id).ok_or_else(|| MetricsError::MissingOutcome { id: s.id.clone() })?;
        counts += classify(s, o, rule);
    }
    Ok(counts)
}

pub fn precision_recall(counts: &EvalCounts) -> (Option<f64>, Option<f64>) {
    (counts.precision(), counts.recall())
}

/// `(1 + β²)·P·R / (β²·P + R)`; `None` when the denominator is zero.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> Option<f64> {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    (den > 0.0).then(|| (1.0 + b2) * precision * recall / den)
}

/// Signed percentage change from `a` to `b`.
pub fn ratio_change(a: f64, b: f64) -> Result<f64, MetricsError> {
    if a == 0.0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok((b - a) / a * 100.0)
}

fn log_bisect(g: impl Fn(f64) -> f64) -> Option<f64> {
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e6f64.ln());
    let (glo, ghi) = (g(lo.exp()), g(hi.exp()));
    if glo == 0.0 {
        return Some(lo.exp());
    }
    if glo.signum() == ghi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (g(mid.exp()) > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((0.5 * (lo + hi)).exp())
}

/// The β > 0 at which the F-β scores of `(p1, r1)` and `(p2, r2)` are
/// equal. Closed form `β² = r1·r2·(p2−p1) / (p1·p2·(r1−r2))`, with a
/// bisection fallback when the closed form is numerically degenerate.
pub fn crossover_beta(p1: f64, r1: f64, p2: f64, r2: f64) -> Result<f64, MetricsError> {
    let (dp, dr) = (p2 - p1, r1 - r2);
    // The pairs must straddle: one better in precision, the other in recall.
    if dp * dr <= 0.0 || p1 <= 0.0 || p2 <= 0.0 {
        return Err(MetricsError::NoCrossover);
    }
    let den = p1 * p2 * dr;
    if den.abs() > 1e-12 {
        let b2 = r1 * r2 * dp / den;
        if b2.is_finite() && b2 > 0.0 {
            return Ok(b2.sqrt());
        }
    }
    let g = |b: f64| f_beta(p1, r1, b).unwrap_or(0.0) - f_beta(p2, r2, b).unwrap_or(0.0);
    log_bisect(g).ok_or(MetricsError::NoCrossover)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub label: String,
    pub beta: f64,
    pub score: Option<f64>,
}

pub fn fbeta_curve(pairs: &[(String, f64, f64)], betas: &[f64]) -> Vec<CurveRow> {
    pairs
        .iter()
        .flat_map(|(label, p, r)| {
            betas.iter().map(move |&beta| CurveRow { label: label.clone(), beta, score: f_beta(*p, *r, beta) })
        })
        .collect()
}

/// Evenly spaced grid `start, start+step, ..., ≤ end`.
pub fn beta_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    assert!(start > 0.0 && step > 0.0 && end >= start, "invalid beta grid");
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector: String,
    pub corpus: String,
    pub counts: EvalCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// `(β, F-β)` in the requested order; always starts with 1.0 and 1.5.
    pub f_scores: Vec<(f64, Option<f64>)>,
}

impl EvalReport {
    pub const DEFAULT_BETAS: [f64; 2] = [1.0, 1.5];

    pub fn new(detector: impl Into<String>, corpus: impl Into<String>, counts: EvalCounts, extra_betas: &[f64]) -> Self {
        let (precision, recall) = precision_recall(&counts);
        let mut betas = Self::DEFAULT_BETAS.to_vec();
        betas.extend(extra_betas.iter().filter(|b| !Self::DEFAULT_BETAS.contains(b)));
        let f_scores = betas
            .into_iter()
            .map(|b| (b, precision.zip(recall).and_then(|(p, r)| f_beta(p, r, b))))
            .collect();
        EvalReport { detector: detector.into(), corpus: corpus.into(), counts, precision, recall, f_scores }
    }
}

/// Percentage with two decimals, or `NA`.
pub struct Percent(pub Option<f64>);

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{:.2}", v * 100.0),
            None => f.write_str("NA"),
        }
    }
}

fn beta_column(b: f64) -> String {
    let s = format!("{b}");
    if s.contains('.') { format!("f{s}") } else { format!("f{s}.0") }
}

/// All reports must share the same β columns.
pub fn report_csv(reports: &[EvalReport]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let betas: Vec<f64> = reports
        .first()
        .map(|r| r.f_scores.iter().map(|(b, _)| *b).collect())
        .unwrap_or_else(|| EvalReport::DEFAULT_BETAS.to_vec());
    let mut header: Vec<String> = ["detector", "corpus", "tp", "fp", "fn", "tn", "precision", "recall"].map(String::from).to_vec();
    header.extend(betas.iter().map(|b| beta_column(*b)));
    w.write_record(&header)?;
    for r in reports {
        let c = r.counts;
        let mut row = vec![
            r.detector.clone(),
            r.corpus.clone(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            Percent(r.precision).to_string(),
            Percent(r.recall).to_string(),
        ];
        row.extend(r.f_scores.iter().map(|(_, s)| Percent(*s).to_string()));
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("UTF-8"))
}

pub fn curve_csv(rows: &[CurveRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "beta", "score"])?;
    for r in rows {
        w.write_record([r.label.clone(), format!("{}", r.beta), Percent(r.score).to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("UTF-8"))
}
