//! Flow-sensitive scope analysis and local type inference.
//!
//! The checker is quiet under uncertainty: an operation is diagnosed only
//! when it is invalid for every possible (known) type of its operands.

mod builtins;
mod interp;
mod stubs;
mod types;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::source::ast::{Expr, SyntaxTree};
use crate::source::SourceSpan;

pub use builtins::{is_builtin_name, BUILTIN_NAMES};
pub use stubs::{annotation_type, ClassInfo, StubError, StubSet};
pub use types::{compatible, ParamSig, Signature, TypeTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    NameError,
    AttributeError,
    UnsupportedOperand,
    WrongArgTypes,
    NotWritable,
    BadReturnType,
    ImportError,
    InternalError,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::NameError,
        Category::AttributeError,
        Category::UnsupportedOperand,
        Category::WrongArgTypes,
        Category::NotWritable,
        Category::BadReturnType,
        Category::ImportError,
        Category::InternalError,
    ];

    /// Categories reported without annotations.
    pub const UNANNOTATED: [Category; 5] = [
        Category::NameError,
        Category::AttributeError,
        Category::UnsupportedOperand,
        Category::WrongArgTypes,
        Category::NotWritable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::NameError => "name-error",
            Category::AttributeError => "attribute-error",
            Category::UnsupportedOperand => "unsupported-operand",
            Category::WrongArgTypes => "wrong-arg-types",
            Category::NotWritable => "not-writable",
            Category::BadReturnType => "bad-return-type",
            Category::ImportError => "import-error",
            Category::InternalError => "internal-error",
        }
    }

    /// Whether the labeling pipeline discards this category.
    pub fn is_ignored(self) -> bool {
        matches!(self, Category::ImportError | Category::InternalError)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown diagnostic category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub category: Category,
    pub span: SourceSpan,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckConfig {
    pub use_annotations: bool,
    pub stubs: Option<StubSet>,
    /// Extra module-level names bound to `Unknown`, e.g. synthesized
    /// imports for packages that could not be resolved.
    pub ambient_names: BTreeSet<String>,
}

impl CheckConfig {
    pub fn with_annotations(use_annotations: bool) -> Self {
        CheckConfig { use_annotations, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Definedness {
    Unbound,
    MaybeBound,
    Bound,
}

impl Definedness {
    pub fn join(self, other: Definedness) -> Definedness {
        use Definedness::*;
        match (self, other) {
            (Bound, Bound) => Bound,
            (Unbound, Unbound) => Unbound,
            _ => MaybeBound,
        }
    }
}

/// Binding information for the analyzed function.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScopeModel {
    /// Parameters plus every name assigned in the function body.
    pub locals: BTreeSet<String>,
    /// Names declared `global` or `nonlocal`.
    pub declared_outer: BTreeSet<String>,
    /// Definedness of each local at the start of every reachable statement,
    /// keyed by the statement's first token index.
    pub statements: BTreeMap<usize, BTreeMap<String, Definedness>>,
    /// Definedness at every reachable load of a local, keyed by token index.
    pub loads: BTreeMap<usize, (String, Definedness)>,
}

impl ScopeModel {
    pub fn definedness_at_load(&self, token_index: usize) -> Option<Definedness> {
        self.loads.get(&token_index).map(|(_, d)| *d)
    }
}

pub fn build_scopes(tree: &SyntaxTree) -> ScopeModel {
    let stubs = stubs_for(tree, &CheckConfig::default()).unwrap_or_default();
    let ambient = BTreeSet::new();
    let mut a = interp::Analysis::new(tree, &stubs, false, &ambient, true);
    a.run(tree);
    a.into_scope_model()
}

/// Variables visible to [`expr_type`]: each is treated as bound.
#[derive(Debug, Clone, Default)]
pub struct TypeEnv {
    pub bindings: BTreeMap<String, TypeTerm>,
    pub stubs: StubSet,
}

/// Type of an expression under `env`, discarding any diagnostics.
pub fn expr_type(env: &TypeEnv, expr: &Expr) -> TypeTerm {
    interp::Analysis::expr_type(env, expr)
}

fn stubs_for(tree: &SyntaxTree, config: &CheckConfig) -> Result<StubSet, StubError> {
    let mut stubs = StubSet::from_parts(&tree.imports, &tree.stubs)?;
    if let Some(extra) = &config.stubs {
        stubs.merge(extra)?;
    }
    Ok(stubs)
}

fn internal_error(tree: &SyntaxTree, message: String) -> Vec<Diagnostic> {
    vec![Diagnostic { category: Category::InternalError, span: tree.function.span, message }]
}

/// Runs the checker. Diagnostics are sorted by position and deduplicated;
/// any engine failure becomes a single `internal-error`.
pub fn check(tree: &SyntaxTree, config: &CheckConfig) -> Vec<Diagnostic> {
    let stubs = match stubs_for(tree, config) {
        Ok(s) => s,
        Err(e) => return internal_error(tree, e.to_string()),
    };
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        let mut a = interp::Analysis::new(tree, &stubs, config.use_annotations, &config.ambient_names, false);
        a.run(tree);
        a.into_diagnostics()
    }));
    match result {
        Ok(mut diags) => {
            diags.sort_by(|a, b| {
                (a.span.token_index, a.category, &a.message).cmp(&(b.span.token_index, b.category, &b.message))
            });
            diags.dedup();
            diags
        }
        Err(_) => internal_error(tree, "checker failed on this input".into()),
    }
}

#[cfg(test)]
mod tests;
