//! Two-phase type-checker labeling of buggy samples.
//!
//! Phase 1 checks the program and turns undefined names that look like
//! missing modules (used only as attribute or call roots, never bound) into
//! ambient `Unknown` bindings. Phase 2 checks again; import and internal
//! errors are discarded, and for buggy samples only diagnostics on the bug
//! line count.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, ProgramSample};
use crate::source::ast::{walk_exprs, ExprKind};
use crate::source::{parse_source, ParsedSource, Usage};
use crate::typecheck::{check, Category, CheckConfig, Diagnostic, StubSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("sample `{id}` has no bug record")]
    NotBuggy { id: String },
    #[error("sample `{id}` is not labeled correct")]
    NotCorrect { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelResult {
    pub type_related: bool,
    /// Every kept diagnostic's category, in source order (a multiset).
    pub matched_categories: Vec<Category>,
    /// Phase-2 diagnostics before any filtering.
    pub all_diagnostics: Vec<Diagnostic>,
    pub phase1_missing_names: Vec<String>,
    /// Why the sample could not be analyzed, if it could not.
    pub audit: Option<String>,
}

/// Outcome of the shared check path, before any line filter.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckedSample {
    pub all_diagnostics: Vec<Diagnostic>,
    pub missing_names: Vec<String>,
    pub audit: Option<String>,
}

impl CheckedSample {
    /// Diagnostics surviving the import/internal-error filter.
    pub fn reportable(&self) -> impl Iterator<Item = &Diagnostic> {
        self.all_diagnostics.iter().filter(|d| !d.category.is_ignored())
    }
}

fn unanalyzable(reason: String) -> CheckedSample {
    CheckedSample { audit: Some(reason), ..Default::default() }
}

/// Undefined names that are only ever used as `name.attr` or `name(...)`.
fn missing_module_names(parsed: &ParsedSource, diagnostics: &[Diagnostic]) -> BTreeSet<String> {
    let occurrences = parsed.occurrences();
    let bound: HashSet<&str> = occurrences
        .iter()
        .filter(|o| matches!(o.usage, Usage::Store | Usage::Param | Usage::Delete))
        .map(|o| o.name.as_str())
        .collect();
    let mut roots = HashSet::new();
    walk_exprs(&parsed.tree.function.body, &mut |e| match &e.kind {
        ExprKind::Attribute { value, .. } | ExprKind::Call { func: value, .. } => {
            if let Some(n) = value.name() {
                roots.insert(n.span.token_index);
            }
        }
        _ => {}
    });
    diagnostics
        .iter()
        .filter(|d| d.category == Category::NameError)
        .filter_map(|d| parsed.tokens.get(d.span.token_index).map(|t| t.text.clone()))
        .filter(|name| !bound.contains(name.as_str()))
        .filter(|name| {
            occurrences
                .iter()
                .filter(|o| &o.name == name && o.usage == Usage::Load)
                .all(|o| roots.contains(&o.span.token_index))
        })
        .collect()
}

/// Both checking phases, no line filter.
pub fn check_sample(source: &str, stubs: Option<&str>, config: &CheckConfig) -> CheckedSample {
    let parsed = match parse_source(source) {
        Ok(p) => p,
        Err(e) => return unanalyzable(e.to_string()),
    };
    let mut config = config.clone();
    if let Some(text) = stubs {
        let extra = match StubSet::parse(text) {
            Ok(s) => s,
            Err(e) => return unanalyzable(format!("stubs: {e}")),
        };
        match &mut config.stubs {
            Some(existing) => {
                if let Err(e) = existing.merge(&extra) {
                    return unanalyzable(format!("stubs: {e}"));
                }
            }
            None => config.stubs = Some(extra),
        }
    }
    let phase1 = check(&parsed.tree, &config);
    let missing = missing_module_names(&parsed, &phase1);
    let phase2 = if missing.is_empty() {
        phase1
    } else {
        config.ambient_names.extend(missing.iter().cloned());
        check(&parsed.tree, &config)
    };
    let audit = phase2
        .iter()
        .find(|d| d.category == Category::InternalError)
        .map(|d| d.message.clone());
    CheckedSample { all_diagnostics: phase2, missing_names: missing.into_iter().collect(), audit }
}

pub fn label_sample(sample: &ProgramSample, config: &CheckConfig) -> Result<LabelResult, LabelError> {
    let bug = sample.bug.as_ref().ok_or_else(|| LabelError::NotBuggy { id: sample.id.clone() })?;
    let checked = check_sample(&sample.source, sample.stubs.as_deref(), config);
    let matched_categories: Vec<Category> = if checked.audit.is_some() {
        Vec::new()
    } else {
        checked.reportable().filter(|d| d.span.line == bug.line).map(|d| d.category).collect()
    };
    Ok(LabelResult {
        type_related: !matched_categories.is_empty(),
        matched_categories,
        all_diagnostics: checked.all_diagnostics,
        phase1_missing_names: checked.missing_names,
        audit: checked.audit,
    })
}

/// Whether a correct program triggers any category seen on faulty ones.
pub fn flag_correct_program(
    sample: &ProgramSample,
    config: &CheckConfig,
    faulty_categories: &BTreeSet<Category>,
) -> Result<bool, LabelError> {
    if sample.label != Label::Correct {
        return Err(LabelError::NotCorrect { id: sample.id.clone() });
    }
    let checked = check_sample(&sample.source, sample.stubs.as_deref(), config);
    Ok(checked.audit.is_none() && checked.reportable().any(|d| faulty_categories.contains(&d.category)))
}

/// Labels every buggy sample in place; correct samples are left untouched.
pub fn label_corpus(samples: &mut [ProgramSample], config: &CheckConfig) -> BTreeMap<Category, usize> {
    let mut histogram = BTreeMap::new();
    for s in samples.iter_mut().filter(|s| s.label == Label::Buggy) {
        let r = label_sample(s, config).expect("buggy samples carry a bug record");
        for c in &r.matched_categories {
            *histogram.entry(*c).or_insert(0) += 1;
        }
        s.type_related = Some(r.type_related);
        s.matched_categories = Some(r.matched_categories);
    }
    histogram
}
