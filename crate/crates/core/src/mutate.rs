//! Synthetic variable-misuse injection: replace one load of a local variable
//! with another local name bound in the same function.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BugRecord, Label, ProgramSample};
use crate::rng::keyed_rng;
use crate::source::ast::{walk_stmts, StmtKind};
use crate::source::{parse_source, IdentifierOccurrence, ParsedSource, SourceError, SourceSpan, Usage};

#[derive(Debug, Error)]
pub enum MutateError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("no injection site in `{id}`")]
    NoSite { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisuseRecord {
    pub location: SourceSpan,
    pub wrong_var: String,
    pub correct_var: String,
    /// Every local name of the function except the injected one; contains
    /// `correct_var`.
    pub repair_candidates: Vec<String>,
}

impl MisuseRecord {
    pub fn to_bug_record(&self) -> BugRecord {
        BugRecord {
            line: self.location.line,
            token_index: Some(self.location.token_index),
            wrong_var: self.wrong_var.clone(),
            correct_var: self.correct_var.clone(),
            repair_candidates: self.repair_candidates.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectionSite {
    pub occurrence: IdentifierOccurrence,
    /// Sorted alternative local names.
    pub candidates: Vec<String>,
}

/// Parameters plus every name stored anywhere in the function, excluding
/// names declared `global` or `nonlocal`.
pub fn local_names(parsed: &ParsedSource) -> BTreeSet<String> {
    let mut outer = BTreeSet::new();
    walk_stmts(&parsed.tree.function.body, &mut |s| {
        if let StmtKind::Global(names) | StmtKind::Nonlocal(names) = &s.kind {
            outer.extend(names.iter().map(|n| n.id.clone()));
        }
    });
    parsed
        .occurrences()
        .into_iter()
        .filter(|o| matches!(o.usage, Usage::Param | Usage::Store))
        .map(|o| o.name)
        .filter(|n| !outer.contains(n))
        .collect()
}

/// Loads of local names inside the body that have at least one alternative.
pub fn injection_sites(parsed: &ParsedSource) -> Vec<InjectionSite> {
    let locals = local_names(parsed);
    let body_start = parsed.tree.function.body_start_token;
    parsed
        .occurrences()
        .into_iter()
        .filter(|o| o.usage == Usage::Load && o.span.token_index >= body_start && locals.contains(&o.name))
        .filter_map(|o| {
            let candidates: Vec<String> = locals.iter().filter(|n| **n != o.name).cloned().collect();
            (!candidates.is_empty()).then_some(InjectionSite { occurrence: o, candidates })
        })
        .collect()
}

/// Replaces the identifier token at `location` with `name`. The token's
/// start position is unchanged, so `location` stays valid afterwards.
pub fn substitute(parsed: &ParsedSource, source: &str, location: &SourceSpan, name: &str) -> String {
    let tok = &parsed.tokens[location.token_index];
    let start = tok.offset;
    let end = start + tok.text.len();
    let mut out = String::with_capacity(source.len() + name.len());
    out.push_str(&source[..start]);
    out.push_str(name);
    out.push_str(&source[end..]);
    out
}

/// Picks a site uniformly, then a replacement uniformly among its
/// alternatives, from a stream keyed by `(seed, key)`.
pub fn inject_source(source: &str, seed: u64, key: &str) -> Result<(String, MisuseRecord), MutateError> {
    let parsed = parse_source(source)?;
    let sites = injection_sites(&parsed);
    if sites.is_empty() {
        return Err(MutateError::NoSite { id: key.to_string() });
    }
    let mut rng = keyed_rng(seed, key);
    let site = &sites[rng.gen_range(0..sites.len())];
    let wrong = &site.candidates[rng.gen_range(0..site.candidates.len())];
    let location = site.occurrence.span;
    let mutated = substitute(&parsed, source, &location, wrong);
    let mut repair_candidates = local_names(&parsed);
    repair_candidates.remove(wrong);
    Ok((
        mutated,
        MisuseRecord {
            location,
            wrong_var: wrong.clone(),
            correct_var: site.occurrence.name.clone(),
            repair_candidates: repair_candidates.into_iter().collect(),
        },
    ))
}

pub fn inject_misuse(sample: &ProgramSample, seed: u64) -> Result<(ProgramSample, MisuseRecord), MutateError> {
    let (source, record) = inject_source(&sample.source, seed, &sample.id)?;
    let mutated = ProgramSample {
        id: format!("{}#misuse", sample.id),
        source,
        label: Label::Buggy,
        bug: Some(record.to_bug_record()),
        type_related: None,
        matched_categories: None,
        ..sample.clone()
    };
    Ok((mutated, record))
}
