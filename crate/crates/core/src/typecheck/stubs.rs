//! Ambient declarations and annotation-expression typing.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::types::{ParamSig, Signature, TypeTerm};
use crate::source::ast::{Expr, ExprKind, Import, ImportKind, Literal, Param, StubFunction, StubItem};
use crate::source::{parse_stubs, SourceError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StubError {
    #[error("stub source: {0}")]
    Source(#[from] SourceError),
    #[error("duplicate stub declaration `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassInfo {
    pub name: String,
    pub attributes: BTreeMap<String, TypeTerm>,
    pub methods: BTreeMap<String, Signature>,
}

/// Declared functions, classes and variables that are in scope before the
/// analyzed function runs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StubSet {
    pub functions: BTreeMap<String, Signature>,
    pub classes: BTreeMap<String, ClassInfo>,
    pub variables: BTreeMap<String, TypeTerm>,
    /// Names bound by imports in the stub source; typed `Unknown`.
    pub imported: BTreeSet<String>,
}

impl StubSet {
    pub fn parse(source: &str) -> Result<StubSet, StubError> {
        let module = parse_stubs(source)?;
        StubSet::from_parts(&module.imports, &module.items)
    }

    pub fn from_parts(imports: &[Import], items: &[StubItem]) -> Result<StubSet, StubError> {
        let class_names: BTreeSet<String> = items
            .iter()
            .filter_map(|i| match i {
                StubItem::Class(c) => Some(c.name.id.clone()),
                _ => None,
            })
            .collect();
        let mut set = StubSet::default();
        let mut seen = BTreeSet::new();
        for import in imports {
            if let ImportKind::Star { .. } = import.kind {
                continue;
            }
            for n in import.bound_names() {
                set.imported.insert(n.id.clone());
            }
        }
        for item in items {
            let name = item.name().id.clone();
            if !seen.insert(name.clone()) {
                return Err(StubError::Duplicate(name));
            }
            match item {
                StubItem::Function(f) => {
                    set.functions.insert(name, signature_of(f, &class_names));
                }
                StubItem::Class(c) => {
                    let mut info = ClassInfo { name: name.clone(), ..Default::default() };
                    for (attr, ann) in &c.attributes {
                        let ty = ann.as_ref().map_or(TypeTerm::Unknown, |a| annotation_type(a, &class_names));
                        info.attributes.insert(attr.id.clone(), ty);
                    }
                    for m in &c.methods {
                        info.methods.insert(m.name.id.clone(), signature_of(m, &class_names));
                    }
                    set.classes.insert(name, info);
                }
                StubItem::Variable(_, ann) => {
                    let ty = ann.as_ref().map_or(TypeTerm::Unknown, |a| annotation_type(a, &class_names));
                    set.variables.insert(name, ty);
                }
            }
        }
        Ok(set)
    }

    /// Adds `other`'s declarations; a name declared in both is an error.
    pub fn merge(&mut self, other: &StubSet) -> Result<(), StubError> {
        for name in other.names() {
            if self.declares(&name) {
                return Err(StubError::Duplicate(name));
            }
        }
        self.functions.extend(other.functions.clone());
        self.classes.extend(other.classes.clone());
        self.variables.extend(other.variables.clone());
        self.imported.extend(other.imported.iter().cloned());
        Ok(())
    }

    pub fn declares(&self, name: &str) -> bool {
        self.functions.contains_key(name)
            || self.classes.contains_key(name)
            || self.variables.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.functions
            .keys()
            .chain(self.classes.keys())
            .chain(self.variables.keys())
            .cloned()
            .collect()
    }

    /// Type of a module-level name bound by the stubs.
    pub fn lookup(&self, name: &str) -> Option<TypeTerm> {
        if let Some(sig) = self.functions.get(name) {
            return Some(TypeTerm::Function(sig.clone()));
        }
        if self.classes.contains_key(name) {
            // The class object: calling it constructs an instance.
            return Some(TypeTerm::Function(Signature::opaque(name, TypeTerm::Class(name.to_string()))));
        }
        if let Some(t) = self.variables.get(name) {
            return Some(t.clone());
        }
        self.imported.contains(name).then_some(TypeTerm::Unknown)
    }

    pub fn class_names(&self) -> BTreeSet<String> {
        self.classes.keys().cloned().collect()
    }
}

pub(crate) fn signature_of(f: &StubFunction, classes: &BTreeSet<String>) -> Signature {
    Signature {
        name: f.name.id.clone(),
        params: Some(f.params.iter().map(|p| param_sig(p, classes, true)).collect()),
        ret: Box::new(f.returns.as_ref().map_or(TypeTerm::Unknown, |r| annotation_type(r, classes))),
    }
}

pub(crate) fn param_sig(p: &Param, classes: &BTreeSet<String>, use_annotation: bool) -> ParamSig {
    let ty = match (&p.annotation, use_annotation) {
        (Some(a), true) => annotation_type(a, classes),
        _ => TypeTerm::Unknown,
    };
    ParamSig { name: p.name.id.clone(), ty, has_default: p.default.is_some(), variadic: p.variadic }
}

fn dotted_tail(e: &Expr) -> Option<&str> {
    match &e.kind {
        ExprKind::Name(n) => Some(&n.id),
        ExprKind::Attribute { attr, .. } => Some(&attr.id),
        _ => None,
    }
}

/// Converts an annotation expression to a type. Anything unrecognized is
/// `Unknown` (gradual typing).
pub fn annotation_type(e: &Expr, classes: &BTreeSet<String>) -> TypeTerm {
    use TypeTerm::*;
    match &e.kind {
        ExprKind::Literal(Literal::None) => NoneT,
        ExprKind::BinOp { left, op: crate::source::ast::BinOp::BitOr, right, .. } => {
            TypeTerm::union_of([annotation_type(left, classes), annotation_type(right, classes)])
        }
        ExprKind::Name(_) | ExprKind::Attribute { .. } => match dotted_tail(e).unwrap_or("") {
            "int" => Int,
            "float" => Float,
            "bool" => Bool,
            "str" | "unicode" | "Text" => Str,
            "bytes" => Bytes,
            "None" => NoneT,
            "list" | "List" => TypeTerm::list(Unknown),
            "dict" | "Dict" => TypeTerm::dict(Unknown, Unknown),
            "set" | "Set" | "frozenset" | "FrozenSet" => TypeTerm::set(Unknown),
            "tuple" | "Tuple" => TypeTerm::tuple_of(Unknown),
            "Callable" => Function(Signature::opaque("Callable", Unknown)),
            name if classes.contains(name) && matches!(e.kind, ExprKind::Name(_)) => Class(name.to_string()),
            _ => Unknown,
        },
        ExprKind::Subscript { value, index } => {
            let args: Vec<&Expr> = match &index.kind {
                ExprKind::Tuple(items) => items.iter().collect(),
                _ => vec![index],
            };
            let arg = |i: usize| args.get(i).map_or(Unknown, |a| annotation_type(a, classes));
            match dotted_tail(value).unwrap_or("") {
                "List" | "list" | "Sequence" | "MutableSequence" => TypeTerm::list(arg(0)),
                "Set" | "set" | "FrozenSet" | "frozenset" => TypeTerm::set(arg(0)),
                "Dict" | "dict" | "Mapping" | "MutableMapping" => TypeTerm::dict(arg(0), arg(1)),
                "Tuple" | "tuple" => {
                    let ellipsis = args
                        .get(1)
                        .is_some_and(|a| matches!(a.kind, ExprKind::Literal(Literal::Ellipsis)));
                    if ellipsis {
                        TypeTerm::tuple_of(arg(0))
                    } else {
                        Tuple((0..args.len()).map(arg).collect())
                    }
                }
                "Optional" => TypeTerm::union_of([arg(0), NoneT]),
                "Union" => TypeTerm::union_of((0..args.len()).map(arg)),
                "Callable" => Function(Signature::opaque("Callable", arg(1))),
                _ => Unknown,
            }
        }
        _ => Unknown,
    }
}
