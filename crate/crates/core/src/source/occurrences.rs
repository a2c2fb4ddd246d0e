//! Identifier occurrences of the analyzed function, classified by position.

use super::ast::*;
use super::{IdentifierOccurrence, Usage};

/// Occurrences in token order. Attribute selectors, keyword-argument names,
/// the function's own name, `global`/`nonlocal` lists, lambda interiors and
/// f-string interiors are not occurrences.
pub fn identifier_occurrences(tree: &SyntaxTree) -> Vec<IdentifierOccurrence> {
    let mut c = Collector::default();
    let f = &tree.function;
    for p in &f.params {
        c.push(&p.name, Usage::Param);
        if let Some(a) = &p.annotation {
            c.expr(a, Usage::Annotation);
        }
        if let Some(d) = &p.default {
            c.expr(d, Usage::Load);
        }
    }
    if let Some(r) = &f.returns {
        c.expr(r, Usage::Annotation);
    }
    c.block(&f.body);
    c.out.sort_by_key(|o| o.span.token_index);
    c.out
}

#[derive(Default)]
struct Collector {
    out: Vec<IdentifierOccurrence>,
}

impl Collector {
    fn push(&mut self, name: &Name, usage: Usage) {
        self.out.push(IdentifierOccurrence { name: name.id.clone(), span: name.span, usage });
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Assign { targets, value } => {
                for t in targets {
                    self.target(t, Usage::Store);
                }
                self.expr(value, Usage::Load);
            }
            StmtKind::AnnAssign { target, annotation, value } => {
                self.target(target, Usage::Store);
                self.expr(annotation, Usage::Annotation);
                if let Some(v) = value {
                    self.expr(v, Usage::Load);
                }
            }
            StmtKind::AugAssign { target, value, .. } => {
                self.target(target, Usage::Store);
                self.expr(value, Usage::Load);
            }
            StmtKind::Expr(e) => self.expr(e, Usage::Load),
            StmtKind::Return(v) => {
                if let Some(v) = v {
                    self.expr(v, Usage::Load);
                }
            }
            StmtKind::If { test, body, orelse } | StmtKind::While { test, body, orelse } => {
                self.expr(test, Usage::Load);
                self.block(body);
                self.block(orelse);
            }
            StmtKind::For { target, iter, body, orelse } => {
                self.target(target, Usage::Store);
                self.expr(iter, Usage::Load);
                self.block(body);
                self.block(orelse);
            }
            StmtKind::Try { body, handlers, orelse, finalbody } => {
                self.block(body);
                for h in handlers {
                    if let Some(t) = &h.exc_type {
                        self.expr(t, Usage::Load);
                    }
                    if let Some(n) = &h.name {
                        self.push(n, Usage::Store);
                    }
                    self.block(&h.body);
                }
                self.block(orelse);
                self.block(finalbody);
            }
            StmtKind::With { items, body } => {
                for item in items {
                    self.expr(&item.context, Usage::Load);
                    if let Some(t) = &item.target {
                        self.target(t, Usage::Store);
                    }
                }
                self.block(body);
            }
            StmtKind::Delete(targets) => {
                for t in targets {
                    self.target(t, Usage::Delete);
                }
            }
            StmtKind::Assert { test, msg } => {
                self.expr(test, Usage::Load);
                if let Some(m) = msg {
                    self.expr(m, Usage::Load);
                }
            }
            StmtKind::Raise { exc, cause } => {
                for e in [exc, cause].into_iter().flatten() {
                    self.expr(e, Usage::Load);
                }
            }
            StmtKind::Import(import) => {
                for n in import.bound_names() {
                    self.push(n, Usage::Store);
                }
            }
            StmtKind::Pass
            | StmtKind::Break
            | StmtKind::Continue
            | StmtKind::Global(_)
            | StmtKind::Nonlocal(_) => {}
        }
    }

    /// Binding position: bare names get `usage`; the bases of attribute and
    /// subscript targets are loads.
    fn target(&mut self, e: &Expr, usage: Usage) {
        match &e.kind {
            ExprKind::Name(n) => self.push(n, usage),
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                for i in items {
                    self.target(i, usage);
                }
            }
            ExprKind::Starred(inner) => self.target(inner, usage),
            _ => self.expr(e, Usage::Load),
        }
    }

    /// Expression position; `usage` is `Load` or `Annotation`.
    fn expr(&mut self, e: &Expr, usage: Usage) {
        match &e.kind {
            ExprKind::Name(n) => self.push(n, usage),
            ExprKind::Literal(_) | ExprKind::Lambda => {}
            ExprKind::Tuple(items) | ExprKind::List(items) | ExprKind::Set(items) => {
                for i in items {
                    self.expr(i, usage);
                }
            }
            ExprKind::Dict(entries) => {
                for (k, v) in entries {
                    if let Some(k) = k {
                        self.expr(k, usage);
                    }
                    self.expr(v, usage);
                }
            }
            ExprKind::Attribute { value, .. } => self.expr(value, usage),
            ExprKind::Subscript { value, index } => {
                self.expr(value, usage);
                self.expr(index, usage);
            }
            ExprKind::Slice { lower, upper, step } => {
                for part in [lower, upper, step].into_iter().flatten() {
                    self.expr(part, usage);
                }
            }
            ExprKind::Call { func, args } => {
                self.expr(func, usage);
                for a in args {
                    self.expr(a.value(), usage);
                }
            }
            ExprKind::BinOp { left, right, .. } => {
                self.expr(left, usage);
                self.expr(right, usage);
            }
            ExprKind::UnaryOp { operand, .. } => self.expr(operand, usage),
            ExprKind::Compare { left, ops } => {
                self.expr(left, usage);
                for (_, _, r) in ops {
                    self.expr(r, usage);
                }
            }
            ExprKind::BoolOp { values, .. } => {
                for v in values {
                    self.expr(v, usage);
                }
            }
            ExprKind::IfExp { test, body, orelse } => {
                self.expr(test, usage);
                self.expr(body, usage);
                self.expr(orelse, usage);
            }
            ExprKind::Comprehension { element, value, generators, .. } => {
                self.expr(element, usage);
                if let Some(v) = value {
                    self.expr(v, usage);
                }
                for g in generators {
                    self.target(&g.target, Usage::Store);
                    self.expr(&g.iter, usage);
                    for c in &g.conditions {
                        self.expr(c, usage);
                    }
                }
            }
            ExprKind::Starred(inner) | ExprKind::YieldFrom(inner) => self.expr(inner, usage),
            ExprKind::Yield(v) => {
                if let Some(v) = v {
                    self.expr(v, usage);
                }
            }
        }
    }
}
