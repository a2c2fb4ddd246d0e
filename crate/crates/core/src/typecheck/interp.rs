//! Abstract interpreter over the function body.
//!
//! The state is a map from every local to its definedness and type, or
//! `None` when the program point is unreachable. Branches join pointwise;
//! loops iterate to a fixpoint (widening changed types to `Unknown`) with
//! diagnostics suppressed, then run once more with diagnostics on.

use std::collections::{BTreeMap, BTreeSet};

use super::builtins::{self, Index, ItemStore};
use super::stubs::{annotation_type, param_sig, StubSet};
use super::types::{compatible, ParamSig, Signature, TypeTerm};
use super::{Category, Definedness, Diagnostic, ScopeModel, TypeEnv};
use crate::source::ast::*;
use crate::source::SourceSpan;

const WIDEN_AFTER: usize = 4;
const MAX_ITERATIONS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
struct Binding {
    def: Definedness,
    ty: TypeTerm,
}

impl Binding {
    fn unbound() -> Self {
        Binding { def: Definedness::Unbound, ty: TypeTerm::Unknown }
    }

    fn bound(ty: TypeTerm) -> Self {
        Binding { def: Definedness::Bound, ty }
    }

    fn join(&self, other: &Binding) -> Binding {
        let ty = match (self.def, other.def) {
            (Definedness::Unbound, Definedness::Unbound) => TypeTerm::Unknown,
            (Definedness::Unbound, _) => other.ty.clone(),
            (_, Definedness::Unbound) => self.ty.clone(),
            _ => self.ty.join(&other.ty),
        };
        Binding { def: self.def.join(other.def), ty }
    }
}

type Env = BTreeMap<String, Binding>;
type State = Option<Env>;

fn join_env(a: &Env, b: &Env) -> Env {
    let mut out = Env::new();
    for k in a.keys().chain(b.keys()) {
        if out.contains_key(k) {
            continue;
        }
        let unbound = Binding::unbound();
        let x = a.get(k).unwrap_or(&unbound);
        let y = b.get(k).unwrap_or(&unbound);
        out.insert(k.clone(), x.join(y));
    }
    out
}

fn join_states<'a>(states: impl IntoIterator<Item = &'a State>) -> State {
    let mut acc: State = None;
    for s in states.into_iter().flatten() {
        acc = Some(match acc {
            None => s.clone(),
            Some(a) => join_env(&a, s),
        });
    }
    acc
}

/// Past the widening point, every binding that still changes goes to top.
fn widen(prev: &Env, next: &Env) -> Env {
    let mut out = next.clone();
    for (k, b) in out.iter_mut() {
        if prev.get(k) != Some(b) {
            let def = prev.get(k).map_or(b.def, |p| p.def.join(b.def));
            *b = Binding { def, ty: TypeTerm::Unknown };
        }
    }
    out
}

#[derive(Default)]
struct LoopCtx {
    breaks: Vec<State>,
    continues: Vec<State>,
}

pub(super) struct Analysis<'a> {
    stubs: &'a StubSet,
    use_annotations: bool,
    ambient: &'a BTreeSet<String>,
    locals: BTreeSet<String>,
    declared_outer: BTreeSet<String>,
    /// Module-level imports of the analyzed source.
    imported: BTreeSet<String>,
    star_import: Option<SourceSpan>,
    function_name: String,
    self_sig: Signature,
    declared_return: Option<TypeTerm>,
    collect: bool,
    diags: Vec<Diagnostic>,
    loops: Vec<LoopCtx>,
    record_scopes: bool,
    scope: ScopeModel,
    entry: Env,
}

impl<'a> Analysis<'a> {
    pub(super) fn new(
        tree: &SyntaxTree,
        stubs: &'a StubSet,
        use_annotations: bool,
        ambient: &'a BTreeSet<String>,
        record_scopes: bool,
    ) -> Self {
        let f = &tree.function;
        let mut declared_outer = BTreeSet::new();
        walk_stmts(&f.body, &mut |s| {
            if let StmtKind::Global(names) | StmtKind::Nonlocal(names) = &s.kind {
                declared_outer.extend(names.iter().map(|n| n.id.clone()));
            }
        });
        let mut locals: BTreeSet<String> = f.params.iter().map(|p| p.name.id.clone()).collect();
        walk_stmts(&f.body, &mut |s| collect_stmt_bindings(s, &mut locals));
        for n in &declared_outer {
            locals.remove(n);
        }
        let mut is_generator = false;
        walk_exprs(&f.body, &mut |e| {
            if matches!(e.kind, ExprKind::Yield(_) | ExprKind::YieldFrom(_)) {
                is_generator = true;
            }
        });
        let classes = stubs.class_names();
        let mut imported = BTreeSet::new();
        let mut star_import = None;
        for import in &tree.imports {
            if let ImportKind::Star { .. } = import.kind {
                star_import.get_or_insert(import.span);
            }
            imported.extend(import.bound_names().into_iter().map(|n| n.id.clone()));
        }

        let mut entry = Env::new();
        for l in &locals {
            entry.insert(l.clone(), Binding::unbound());
        }
        for p in &f.params {
            let ty = match (&p.annotation, use_annotations) {
                (Some(a), true) => annotation_type(a, &classes),
                _ => TypeTerm::Unknown,
            };
            entry.insert(p.name.id.clone(), Binding::bound(ty));
        }
        let self_sig = Signature {
            name: f.name.id.clone(),
            params: Some(f.params.iter().map(|p| param_sig(p, &classes, use_annotations)).collect()),
            ret: Box::new(match (&f.returns, use_annotations) {
                (Some(r), true) => annotation_type(r, &classes),
                _ => TypeTerm::Unknown,
            }),
        };
        let declared_return = match (&f.returns, use_annotations) {
            (Some(r), true) if !is_generator => Some(annotation_type(r, &classes)),
            _ => None,
        };
        Analysis {
            stubs,
            use_annotations,
            ambient,
            locals,
            declared_outer,
            imported,
            star_import,
            function_name: f.name.id.clone(),
            self_sig,
            declared_return,
            collect: true,
            diags: Vec::new(),
            loops: Vec::new(),
            record_scopes,
            scope: ScopeModel::default(),
            entry,
        }
    }

    pub(super) fn run(&mut self, tree: &SyntaxTree) {
        if let Some(span) = self.star_import {
            self.diag(Category::ImportError, span, "Can't resolve names imported with '*'".into());
        }
        let entry = self.entry.clone();
        let f = &tree.function;
        for p in &f.params {
            if let Some(d) = &p.default {
                self.eval(&entry, d);
            }
        }
        self.exec_block(&f.body, Some(entry));
    }

    pub(super) fn into_diagnostics(self) -> Vec<Diagnostic> {
        self.diags
    }

    pub(super) fn into_scope_model(mut self) -> ScopeModel {
        self.scope.locals = self.locals;
        self.scope.declared_outer = self.declared_outer;
        self.scope
    }

    pub(super) fn expr_type(env: &TypeEnv, expr: &Expr) -> TypeTerm {
        let ambient = BTreeSet::new();
        let mut a = Analysis {
            stubs: &env.stubs,
            use_annotations: false,
            ambient: &ambient,
            locals: env.bindings.keys().cloned().collect(),
            declared_outer: BTreeSet::new(),
            imported: BTreeSet::new(),
            star_import: None,
            function_name: String::new(),
            self_sig: Signature::opaque("", TypeTerm::Unknown),
            declared_return: None,
            collect: false,
            diags: Vec::new(),
            loops: Vec::new(),
            record_scopes: false,
            scope: ScopeModel::default(),
            entry: Env::new(),
        };
        let state: Env = env.bindings.iter().map(|(k, t)| (k.clone(), Binding::bound(t.clone()))).collect();
        a.eval(&state, expr)
    }

    fn diag(&mut self, category: Category, span: SourceSpan, message: String) {
        if self.collect {
            self.diags.push(Diagnostic { category, span, message });
        }
    }

    // ----- statements -----

    fn exec_block(&mut self, stmts: &[Stmt], mut state: State) -> State {
        for s in stmts {
            let env = state?;
            state = self.exec_stmt(s, env);
        }
        state
    }

    fn exec_stmt(&mut self, s: &Stmt, mut env: Env) -> State {
        if self.record_scopes && self.collect {
            let snapshot = env
                .iter()
                .filter(|(k, _)| self.locals.contains(*k))
                .map(|(k, b)| (k.clone(), b.def))
                .collect();
            self.scope.statements.insert(s.span.token_index, snapshot);
        }
        match &s.kind {
            StmtKind::Assign { targets, value } => {
                let ty = self.eval(&env, value);
                for t in targets {
                    self.assign(&mut env, t, ty.clone());
                }
                Some(env)
            }
            StmtKind::AnnAssign { target, annotation, value } => {
                let value_ty = value.as_ref().map(|v| self.eval(&env, v));
                let ty = if self.use_annotations {
                    Some(annotation_type(annotation, &self.stubs.class_names()))
                } else {
                    value_ty
                };
                match (ty, value) {
                    (Some(ty), Some(_)) => self.assign(&mut env, target, ty),
                    // A bare annotation binds nothing.
                    _ => {
                        if !matches!(target.kind, ExprKind::Name(_)) {
                            self.eval(&env, target);
                        }
                    }
                }
                Some(env)
            }
            StmtKind::AugAssign { target, op, op_span, value } => {
                let current = self.eval(&env, target);
                let rhs = self.eval(&env, value);
                let result = match lift2(&current, &rhs, |l, r| builtins::inplace_binop(*op, l, r)) {
                    Some(t) => t,
                    None => {
                        let msg = format!(
                            "unsupported operand type(s) for {}=: '{}' and '{}'",
                            op.symbol(),
                            current,
                            rhs
                        );
                        self.diag(Category::UnsupportedOperand, *op_span, msg);
                        TypeTerm::Unknown
                    }
                };
                self.assign(&mut env, target, result);
                Some(env)
            }
            StmtKind::Expr(e) => {
                self.eval(&env, e);
                Some(env)
            }
            StmtKind::Return(value) => {
                let ty = match value {
                    Some(v) => self.eval(&env, v),
                    None => TypeTerm::NoneT,
                };
                if let Some(declared) = self.declared_return.clone() {
                    if !compatible(&ty, &declared) {
                        let span = value.as_ref().map_or(s.span, |v| v.span);
                        self.diag(
                            Category::BadReturnType,
                            span,
                            format!("bad return type: expected {declared}, got {ty}"),
                        );
                    }
                }
                None
            }
            StmtKind::If { test, body, orelse } => {
                self.eval(&env, test);
                let truth = constant_truth(test);
                let then_in = if truth == Some(false) { None } else { Some(self.narrow(&env, test, true)) };
                let else_in = if truth == Some(true) { None } else { Some(self.narrow(&env, test, false)) };
                let a = self.exec_block(body, then_in);
                let b = self.exec_block(orelse, else_in);
                join_states([&a, &b])
            }
            StmtKind::While { test, body, orelse } => self.exec_while(env, test, body, orelse),
            StmtKind::For { target, iter, body, orelse } => {
                let iter_ty = self.eval(&env, iter);
                let elem = self.iterate(&iter_ty, iter.span);
                self.exec_for(env, target, elem, body, orelse)
            }
            StmtKind::Try { body, handlers, orelse, finalbody } => {
                self.exec_try(env, body, handlers, orelse, finalbody)
            }
            StmtKind::With { items, body } => {
                for item in items {
                    self.eval(&env, &item.context);
                    if let Some(t) = &item.target {
                        self.assign(&mut env, t, TypeTerm::Unknown);
                    }
                }
                self.exec_block(body, Some(env))
            }
            StmtKind::Pass | StmtKind::Global(_) | StmtKind::Nonlocal(_) => Some(env),
            StmtKind::Break => {
                if let Some(ctx) = self.loops.last_mut() {
                    ctx.breaks.push(Some(env));
                }
                None
            }
            StmtKind::Continue => {
                if let Some(ctx) = self.loops.last_mut() {
                    ctx.continues.push(Some(env));
                }
                None
            }
            StmtKind::Delete(targets) => {
                for t in targets {
                    self.delete(&mut env, t);
                }
                Some(env)
            }
            StmtKind::Assert { test, msg } => {
                self.eval(&env, test);
                if let Some(m) = msg {
                    self.eval(&env, m);
                }
                if constant_truth(test) == Some(false) {
                    return None;
                }
                Some(self.narrow(&env, test, true))
            }
            StmtKind::Raise { exc, cause } => {
                for e in [exc, cause].into_iter().flatten() {
                    self.eval(&env, e);
                }
                None
            }
            StmtKind::Import(import) => {
                if let ImportKind::Star { .. } = import.kind {
                    self.diag(Category::ImportError, import.span, "Can't resolve names imported with '*'".into());
                }
                for n in import.bound_names() {
                    if self.locals.contains(&n.id) {
                        env.insert(n.id.clone(), Binding::bound(TypeTerm::Unknown));
                    }
                }
                Some(env)
            }
        }
    }

    fn exec_loop<F>(&mut self, entry: &Env, mut body_pass: F) -> (Env, LoopCtx)
    where
        F: FnMut(&mut Self, &Env) -> (State, LoopCtx),
    {
        let outer_collect = self.collect;
        self.collect = false;
        let mut head = entry.clone();
        for iteration in 1..=MAX_ITERATIONS {
            let (out, ctx) = body_pass(self, &head);
            let mut incoming: Vec<State> = vec![Some(entry.clone()), out];
            incoming.extend(ctx.continues);
            let next = join_states(&incoming).expect("entry is reachable");
            let next = join_env(&head, &next);
            if next == head {
                break;
            }
            head = if iteration >= WIDEN_AFTER { widen(&head, &next) } else { next };
        }
        self.collect = outer_collect;
        let (_, ctx) = body_pass(self, &head);
        (head, ctx)
    }

    fn run_body(&mut self, body: &[Stmt], entry: State) -> (State, LoopCtx) {
        self.loops.push(LoopCtx::default());
        let out = self.exec_block(body, entry);
        let ctx = self.loops.pop().expect("pushed above");
        (out, ctx)
    }

    fn exec_while(&mut self, env: Env, test: &Expr, body: &[Stmt], orelse: &[Stmt]) -> State {
        let truth = constant_truth(test);
        let (head, ctx) = self.exec_loop(&env, |a, head| {
            a.eval(head, test);
            let body_in = if truth == Some(false) { None } else { Some(a.narrow(head, test, true)) };
            a.run_body(body, body_in)
        });
        let normal = if truth == Some(true) { None } else { Some(self.narrow(&head, test, false)) };
        let else_out = self.exec_block(orelse, normal);
        let mut exits = vec![else_out];
        exits.extend(ctx.breaks);
        join_states(&exits)
    }

    fn exec_for(&mut self, env: Env, target: &Expr, elem: TypeTerm, body: &[Stmt], orelse: &[Stmt]) -> State {
        let (head, ctx) = self.exec_loop(&env, |a, head| {
            let mut body_in = head.clone();
            a.assign(&mut body_in, target, elem.clone());
            a.run_body(body, Some(body_in))
        });
        let else_out = self.exec_block(orelse, Some(head));
        let mut exits = vec![else_out];
        exits.extend(ctx.breaks);
        join_states(&exits)
    }

    fn exec_try(
        &mut self,
        env: Env,
        body: &[Stmt],
        handlers: &[ExceptHandler],
        orelse: &[Stmt],
        finalbody: &[Stmt],
    ) -> State {
        // An exception may be raised after any prefix of the body.
        let mut points: Vec<State> = vec![Some(env.clone())];
        let mut cur: State = Some(env);
        for s in body {
            let Some(e) = cur else { break };
            cur = self.exec_stmt(s, e);
            points.push(cur.clone());
        }
        let handler_entry = join_states(&points);
        let mut outs = vec![self.exec_block(orelse, cur)];
        for h in handlers {
            let Some(mut henv) = handler_entry.clone() else { continue };
            if let Some(t) = &h.exc_type {
                self.eval(&henv, t);
            }
            if let Some(n) = &h.name {
                if self.locals.contains(&n.id) {
                    henv.insert(n.id.clone(), Binding::bound(TypeTerm::Unknown));
                }
            }
            outs.push(self.exec_block(&h.body, Some(henv)));
        }
        let normal = join_states(&outs);
        if finalbody.is_empty() {
            return normal;
        }
        match normal {
            Some(n) => self.exec_block(finalbody, Some(n)),
            None => {
                self.exec_block(finalbody, handler_entry);
                None
            }
        }
    }

    // ----- bindings -----

    fn bind_name(&mut self, env: &mut Env, name: &Name, ty: TypeTerm) {
        if self.declared_outer.contains(&name.id) {
            return;
        }
        env.insert(name.id.clone(), Binding::bound(ty));
    }

    fn assign(&mut self, env: &mut Env, target: &Expr, ty: TypeTerm) {
        match &target.kind {
            ExprKind::Name(n) => self.bind_name(env, n, ty),
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                let has_star = items.iter().any(|i| matches!(i.kind, ExprKind::Starred(_)));
                match &ty {
                    TypeTerm::Tuple(elems) if !has_star && elems.len() == items.len() => {
                        for (item, t) in items.iter().zip(elems) {
                            self.assign(env, item, t.clone());
                        }
                    }
                    _ => {
                        let elem = elem_type(&ty);
                        for item in items {
                            match &item.kind {
                                ExprKind::Starred(inner) => self.assign(env, inner, TypeTerm::list(elem.clone())),
                                _ => self.assign(env, item, elem.clone()),
                            }
                        }
                    }
                }
            }
            ExprKind::Starred(inner) => self.assign(env, inner, TypeTerm::list(TypeTerm::Unknown)),
            ExprKind::Attribute { value, attr } => {
                let vt = self.eval(env, value);
                if !vt.is_unknown() && vt.members().iter().all(is_sealed_builtin) {
                    self.diag(
                        Category::NotWritable,
                        value.span,
                        format!("Can't assign attribute '{}' on {}", attr.id, vt),
                    );
                }
            }
            ExprKind::Subscript { value, index } => {
                let vt = self.eval(env, value);
                let idx = self.eval_index(env, index);
                self.check_item_store(&vt, &idx, value.span, "assignment");
            }
            _ => {
                self.eval(env, target);
            }
        }
    }

    fn check_item_store(&mut self, vt: &TypeTerm, idx: &Index, span: SourceSpan, what: &str) {
        if vt.is_unknown() {
            return;
        }
        let results: Vec<ItemStore> = vt.members().iter().map(|m| builtins::item_store(m, idx)).collect();
        if results.contains(&ItemStore::Ok) {
            return;
        }
        if results.contains(&ItemStore::NotWritable) {
            self.diag(
                Category::NotWritable,
                span,
                format!("'{}' object does not support item {what}", vt),
            );
        } else {
            self.diag(
                Category::UnsupportedOperand,
                span,
                format!("unsupported operand type(s) for item {what}: '{}'", vt),
            );
        }
    }

    fn delete(&mut self, env: &mut Env, target: &Expr) {
        match &target.kind {
            ExprKind::Name(n) => {
                self.load_name(env, n);
                if self.locals.contains(&n.id) {
                    env.insert(n.id.clone(), Binding::unbound());
                }
            }
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                for i in items {
                    self.delete(env, i);
                }
            }
            ExprKind::Subscript { value, index } => {
                let vt = self.eval(env, value);
                let idx = self.eval_index(env, index);
                self.check_item_store(&vt, &idx, value.span, "deletion");
            }
            _ => {
                self.eval(env, target);
            }
        }
    }

    /// Refines `env` assuming `test` evaluated to `truth`.
    fn narrow(&self, env: &Env, test: &Expr, truth: bool) -> Env {
        let mut out = env.clone();
        self.narrow_into(&mut out, test, truth);
        out
    }

    fn narrow_into(&self, env: &mut Env, test: &Expr, truth: bool) {
        let drop_none = |env: &mut Env, name: &Name| {
            if let Some(b) = env.get_mut(&name.id) {
                b.ty = b.ty.without_none();
            }
        };
        match &test.kind {
            ExprKind::Name(n) if truth => drop_none(env, n),
            ExprKind::UnaryOp { op: UnaryOp::Not, operand } => self.narrow_into(env, operand, !truth),
            ExprKind::BoolOp { op: BoolOp::And, values } if truth => {
                for v in values {
                    self.narrow_into(env, v, true);
                }
            }
            ExprKind::BoolOp { op: BoolOp::Or, values } if !truth => {
                for v in values {
                    self.narrow_into(env, v, false);
                }
            }
            ExprKind::Compare { left, ops } if ops.len() == 1 => {
                let (op, _, right) = &ops[0];
                let is_none = matches!(right.kind, ExprKind::Literal(Literal::None));
                if let (Some(n), true) = (left.name(), is_none) {
                    let not_none = match op {
                        CmpOp::IsNot | CmpOp::NotEq => truth,
                        CmpOp::Is | CmpOp::Eq => !truth,
                        _ => false,
                    };
                    if not_none {
                        drop_none(env, n);
                    }
                }
            }
            _ => {}
        }
    }

    // ----- expressions -----

    fn load_name(&mut self, env: &Env, name: &Name) -> TypeTerm {
        if let Some(b) = env.get(&name.id) {
            if self.record_scopes && self.collect && self.locals.contains(&name.id) {
                self.scope.loads.insert(name.span.token_index, (name.id.clone(), b.def));
            }
            return match b.def {
                Definedness::Bound => b.ty.clone(),
                Definedness::MaybeBound => {
                    self.diag(
                        Category::NameError,
                        name.span,
                        format!("Name '{}' may be undefined on some paths", name.id),
                    );
                    b.ty.clone()
                }
                Definedness::Unbound => {
                    self.diag(
                        Category::NameError,
                        name.span,
                        format!("Name '{}' is used before assignment", name.id),
                    );
                    TypeTerm::Unknown
                }
            };
        }
        match self.resolve_global(&name.id) {
            Some(t) => t,
            None => {
                self.diag(Category::NameError, name.span, format!("Name '{}' is not defined", name.id));
                TypeTerm::Unknown
            }
        }
    }

    fn resolve_global(&self, name: &str) -> Option<TypeTerm> {
        if name == self.function_name {
            return Some(TypeTerm::Function(self.self_sig.clone()));
        }
        if self.declared_outer.contains(name) || self.imported.contains(name) || self.ambient.contains(name) {
            return Some(TypeTerm::Unknown);
        }
        if let Some(t) = self.stubs.lookup(name) {
            return Some(t);
        }
        if builtins::is_builtin_name(name) {
            return Some(match name {
                "True" | "False" => TypeTerm::Bool,
                _ => TypeTerm::Unknown,
            });
        }
        self.star_import.map(|_| TypeTerm::Unknown)
    }

    /// A name that resolves to the builtin of the same name (not shadowed).
    fn is_builtin_ref(&self, env: &Env, e: &Expr) -> Option<String> {
        let n = e.name()?;
        if env.contains_key(&n.id)
            || n.id == self.function_name
            || self.declared_outer.contains(&n.id)
            || self.imported.contains(&n.id)
            || self.ambient.contains(&n.id)
            || self.stubs.lookup(&n.id).is_some()
        {
            return None;
        }
        builtins::builtin_signature(&n.id).map(|_| n.id.clone())
    }

    fn iterate(&mut self, t: &TypeTerm, span: SourceSpan) -> TypeTerm {
        match lift1(t, builtins::iter_elem) {
            Some(e) => e,
            None => {
                self.diag(Category::AttributeError, span, format!("No attribute '__iter__' on {t}"));
                TypeTerm::Unknown
            }
        }
    }

    fn eval_index(&mut self, env: &Env, index: &Expr) -> Index {
        match &index.kind {
            ExprKind::Slice { lower, upper, step } => {
                for part in [lower, upper, step].into_iter().flatten() {
                    self.eval(env, part);
                }
                Index::Slice
            }
            _ => {
                if let Some(i) = int_literal(index) {
                    return Index::Literal(i);
                }
                Index::Value(self.eval(env, index))
            }
        }
    }

    fn eval(&mut self, env: &Env, e: &Expr) -> TypeTerm {
        use TypeTerm as T;
        match &e.kind {
            ExprKind::Name(n) => self.load_name(env, n),
            ExprKind::Literal(lit) => match lit {
                Literal::Int(_) => T::Int,
                Literal::Float(_) => T::Float,
                Literal::Complex(_) | Literal::Ellipsis => T::Unknown,
                Literal::Str | Literal::FormattedStr => T::Str,
                Literal::Bytes => T::Bytes,
                Literal::Bool(_) => T::Bool,
                Literal::None => T::NoneT,
            },
            ExprKind::Tuple(items) => {
                let tys: Vec<T> = items.iter().map(|i| self.eval(env, i)).collect();
                if items.iter().any(|i| matches!(i.kind, ExprKind::Starred(_))) {
                    T::tuple_of(T::Unknown)
                } else {
                    T::Tuple(tys)
                }
            }
            ExprKind::List(items) => T::list(self.elements(env, items)),
            ExprKind::Set(items) => T::set(self.elements(env, items)),
            ExprKind::Dict(entries) => {
                let mut keys = Vec::new();
                let mut values = Vec::new();
                for (k, v) in entries {
                    let vt = self.eval(env, v);
                    match k {
                        Some(k) => {
                            keys.push(self.eval(env, k));
                            values.push(vt);
                        }
                        None => {
                            keys.push(T::Unknown);
                            values.push(T::Unknown);
                        }
                    }
                }
                if entries.is_empty() {
                    T::dict(T::Unknown, T::Unknown)
                } else {
                    T::dict(T::union_of(keys), T::union_of(values))
                }
            }
            ExprKind::Attribute { value, attr } => {
                let vt = self.eval(env, value);
                self.attribute(&vt, &attr.id, value.span)
            }
            ExprKind::Subscript { value, index } => {
                let vt = self.eval(env, value);
                let idx = self.eval_index(env, index);
                self.subscript(&vt, &idx, value.span)
            }
            ExprKind::Slice { lower, upper, step } => {
                for part in [lower, upper, step].into_iter().flatten() {
                    self.eval(env, part);
                }
                T::Unknown
            }
            ExprKind::Call { func, args } => self.call(env, func, args),
            ExprKind::BinOp { left, op, op_span, right } => {
                let l = self.eval(env, left);
                let r = self.eval(env, right);
                match lift2(&l, &r, |a, b| builtins::binop(*op, a, b)) {
                    Some(t) => t,
                    None => {
                        self.diag(
                            Category::UnsupportedOperand,
                            *op_span,
                            format!("unsupported operand type(s) for {}: '{}' and '{}'", op.symbol(), l, r),
                        );
                        T::Unknown
                    }
                }
            }
            ExprKind::UnaryOp { op, operand } => {
                let t = self.eval(env, operand);
                match lift1(&t, |m| builtins::unary(*op, m)) {
                    Some(r) => r,
                    None => {
                        let sym = match op {
                            UnaryOp::Neg => "unary -",
                            UnaryOp::Pos => "unary +",
                            UnaryOp::Invert => "~",
                            UnaryOp::Not => "not",
                        };
                        self.diag(
                            Category::UnsupportedOperand,
                            e.span,
                            format!("unsupported operand type for {sym}: '{t}'"),
                        );
                        T::Unknown
                    }
                }
            }
            ExprKind::Compare { left, ops } => {
                let mut l = self.eval(env, left);
                for (op, span, right) in ops {
                    let r = self.eval(env, right);
                    let valid = lift2(&l, &r, |a, b| builtins::compare(*op, a, b).then_some(T::Bool));
                    if valid.is_none() {
                        self.diag(
                            Category::UnsupportedOperand,
                            *span,
                            format!("unsupported operand type(s) for {}: '{}' and '{}'", op.symbol(), l, r),
                        );
                    }
                    l = r;
                }
                T::Bool
            }
            ExprKind::BoolOp { op, values } => {
                let mut scoped = env.clone();
                let mut tys = Vec::new();
                for v in values {
                    tys.push(self.eval(&scoped, v));
                    self.narrow_into(&mut scoped, v, *op == BoolOp::And);
                }
                T::union_of(tys)
            }
            ExprKind::IfExp { test, body, orelse } => {
                self.eval(env, test);
                let a = self.narrow(env, test, true);
                let b = self.narrow(env, test, false);
                let x = self.eval(&a, body);
                let y = self.eval(&b, orelse);
                x.join(&y)
            }
            ExprKind::Lambda => T::Function(Signature::opaque("<lambda>", T::Unknown)),
            ExprKind::Comprehension { kind, element, value, generators } => {
                let mut scoped = env.clone();
                for g in generators {
                    let it = self.eval(&scoped, &g.iter);
                    let elem = self.iterate(&it, g.iter.span);
                    self.assign_comprehension_target(&mut scoped, &g.target, elem);
                    for c in &g.conditions {
                        self.eval(&scoped, c);
                        self.narrow_into(&mut scoped, c, true);
                    }
                }
                let et = self.eval(&scoped, element);
                let vt = value.as_ref().map(|v| self.eval(&scoped, v));
                match kind {
                    ComprehensionKind::List => T::list(et),
                    ComprehensionKind::Set => T::set(et),
                    ComprehensionKind::Dict => T::dict(et, vt.unwrap_or(T::Unknown)),
                    ComprehensionKind::Generator => T::Unknown,
                }
            }
            ExprKind::Starred(inner) => {
                self.eval(env, inner);
                T::Unknown
            }
            ExprKind::Yield(v) => {
                if let Some(v) = v {
                    self.eval(env, v);
                }
                T::Unknown
            }
            ExprKind::YieldFrom(v) => {
                let t = self.eval(env, v);
                self.iterate(&t, v.span);
                T::Unknown
            }
        }
    }

    /// Comprehension variables live in their own scope, so they bind even
    /// when they are not function locals.
    fn assign_comprehension_target(&mut self, env: &mut Env, target: &Expr, ty: TypeTerm) {
        match &target.kind {
            ExprKind::Name(n) => {
                env.insert(n.id.clone(), Binding::bound(ty));
            }
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                let elems = match &ty {
                    TypeTerm::Tuple(es) if es.len() == items.len() => es.clone(),
                    _ => vec![elem_type(&ty); items.len()],
                };
                for (i, t) in items.iter().zip(elems) {
                    self.assign_comprehension_target(env, i, t);
                }
            }
            ExprKind::Starred(inner) => self.assign_comprehension_target(env, inner, TypeTerm::Unknown),
            _ => self.assign(env, target, ty),
        }
    }

    fn elements(&mut self, env: &Env, items: &[Expr]) -> TypeTerm {
        if items.is_empty() {
            return TypeTerm::Unknown;
        }
        let tys: Vec<TypeTerm> = items
            .iter()
            .map(|i| match &i.kind {
                ExprKind::Starred(inner) => {
                    let t = self.eval(env, inner);
                    elem_type(&t)
                }
                _ => self.eval(env, i),
            })
            .collect();
        TypeTerm::union_of(tys)
    }

    fn attribute(&mut self, vt: &TypeTerm, attr: &str, span: SourceSpan) -> TypeTerm {
        let stubs = self.stubs;
        let lookup = |m: &TypeTerm| -> Option<TypeTerm> {
            match m {
                TypeTerm::Class(name) => match stubs.classes.get(name) {
                    Some(info) => {
                        if let Some(t) = info.attributes.get(attr) {
                            Some(t.clone())
                        } else if let Some(sig) = info.methods.get(attr) {
                            Some(TypeTerm::Function(sig.clone()))
                        } else if attr.starts_with("__") && attr.ends_with("__") {
                            Some(TypeTerm::Unknown)
                        } else {
                            None
                        }
                    }
                    None => Some(TypeTerm::Unknown),
                },
                other => builtins::attribute(other, attr),
            }
        };
        match lift1(vt, lookup) {
            Some(t) => t,
            None => {
                self.diag(Category::AttributeError, span, format!("No attribute '{attr}' on {vt}"));
                TypeTerm::Unknown
            }
        }
    }

    fn subscript(&mut self, vt: &TypeTerm, idx: &Index, span: SourceSpan) -> TypeTerm {
        let result = match idx {
            Index::Value(it) => lift2(vt, it, |v, i| builtins::subscript(v, &Index::Value(i.clone()))),
            other => lift1(vt, |v| builtins::subscript(v, other)),
        };
        match result {
            Some(t) => t,
            None => {
                let index_desc = match idx {
                    Index::Slice => "slice".to_string(),
                    Index::Literal(_) => "int".to_string(),
                    Index::Value(t) => t.to_string(),
                };
                self.diag(
                    Category::UnsupportedOperand,
                    span,
                    format!("unsupported operand type(s) for item retrieval: '{vt}' and '{index_desc}'"),
                );
                TypeTerm::Unknown
            }
        }
    }

    fn call(&mut self, env: &Env, func: &Expr, args: &[Arg]) -> TypeTerm {
        let builtin = self.is_builtin_ref(env, func);
        let ft = match &builtin {
            Some(_) => TypeTerm::Unknown,
            None => self.eval(env, func),
        };
        let arg_tys: Vec<TypeTerm> = args.iter().map(|a| self.eval(env, a.value())).collect();
        if let Some(name) = builtin {
            return self.check_builtin_call(&name, func.span, args, &arg_tys);
        }
        match &ft {
            TypeTerm::Function(sig) => {
                if let Some(params) = &sig.params {
                    self.check_signature_call(sig, params, func.span, args, &arg_tys);
                }
                (*sig.ret).clone()
            }
            TypeTerm::Union(ms) if ms.iter().all(|m| matches!(m, TypeTerm::Function(_))) => {
                TypeTerm::union_of(ms.iter().map(|m| match m {
                    TypeTerm::Function(sig) => (*sig.ret).clone(),
                    _ => TypeTerm::Unknown,
                }))
            }
            _ => TypeTerm::Unknown,
        }
    }

    fn check_builtin_call(&mut self, name: &str, span: SourceSpan, args: &[Arg], arg_tys: &[TypeTerm]) -> TypeTerm {
        let sig = builtins::builtin_signature(name).expect("checked by caller");
        let has_star = args.iter().any(|a| matches!(a, Arg::Star(_) | Arg::DoubleStar(_)));
        let has_kw = args.iter().any(|a| matches!(a, Arg::Keyword(..)));
        let positional: Vec<(usize, &TypeTerm)> = args
            .iter()
            .zip(arg_tys)
            .enumerate()
            .filter(|(_, (a, _))| matches!(a, Arg::Positional(_)))
            .map(|(i, (_, t))| (i, t))
            .collect();
        if has_star || (has_kw && !builtins::accepts_keywords(name)) {
            return (sig.ret)(&[]);
        }
        let n = positional.len();
        let arity_ok = if has_kw { n <= sig.max } else { (sig.min..=sig.max).contains(&n) };
        if !arity_ok {
            let expected = if sig.min == sig.max {
                format!("{}", sig.min)
            } else if sig.max == usize::MAX {
                format!("at least {}", sig.min)
            } else {
                format!("{} to {}", sig.min, sig.max)
            };
            self.diag(
                Category::WrongArgTypes,
                span,
                format!("Function {name} expects {expected} argument(s), got {n}"),
            );
            return (sig.ret)(&[]);
        }
        let mut ok = true;
        for (pos, (arg_index, ty)) in positional.iter().enumerate() {
            let mut rule = sig.rules.get(pos).copied().unwrap_or(builtins::ArgRule::Any);
            if name == "int" && pos == 0 && n == 2 {
                rule = builtins::ArgRule::Text;
            }
            if !ty.is_unknown() && !ty.members().iter().any(|m| rule.accepts(m)) {
                ok = false;
                self.diag(
                    Category::WrongArgTypes,
                    args[*arg_index].value().span,
                    format!(
                        "Function {name} was called with the wrong arguments: expected {}, got {ty}",
                        rule.describe()
                    ),
                );
            }
        }
        let tys: Vec<TypeTerm> = positional.iter().map(|(_, t)| (*t).clone()).collect();
        if ok {
            (sig.ret)(&tys)
        } else {
            (sig.ret)(&[])
        }
    }

    fn check_signature_call(
        &mut self,
        sig: &Signature,
        params: &[ParamSig],
        span: SourceSpan,
        args: &[Arg],
        arg_tys: &[TypeTerm],
    ) {
        if args.iter().any(|a| matches!(a, Arg::Star(_) | Arg::DoubleStar(_))) {
            return;
        }
        let variadic = params.iter().any(|p| p.variadic);
        let fixed: Vec<&ParamSig> = params.iter().filter(|p| !p.variadic).collect();
        let mut supplied = vec![false; fixed.len()];
        let mut positional = 0usize;
        for (arg, ty) in args.iter().zip(arg_tys) {
            let target = match arg {
                Arg::Positional(_) => {
                    positional += 1;
                    if positional > fixed.len() {
                        if !variadic {
                            self.diag(
                                Category::WrongArgTypes,
                                arg.value().span,
                                format!(
                                    "Function {} expects at most {} positional argument(s), got {}",
                                    sig.name,
                                    fixed.len(),
                                    args.iter().filter(|a| matches!(a, Arg::Positional(_))).count()
                                ),
                            );
                        }
                        continue;
                    }
                    positional - 1
                }
                Arg::Keyword(name, _) => match fixed.iter().position(|p| p.name == name.id) {
                    Some(i) => i,
                    None => {
                        if !variadic {
                            self.diag(
                                Category::WrongArgTypes,
                                name.span,
                                format!("Function {} got an unexpected keyword argument '{}'", sig.name, name.id),
                            );
                        }
                        continue;
                    }
                },
                _ => continue,
            };
            supplied[target] = true;
            let expected = &fixed[target].ty;
            if !compatible(ty, expected) {
                self.diag(
                    Category::WrongArgTypes,
                    arg.value().span,
                    format!(
                        "Function {} was called with the wrong arguments: expected {} for '{}', got {}",
                        sig.name, expected, fixed[target].name, ty
                    ),
                );
            }
        }
        if variadic {
            return;
        }
        let missing: Vec<&str> = fixed
            .iter()
            .zip(&supplied)
            .filter(|(p, s)| !**s && !p.has_default)
            .map(|(p, _)| p.name.as_str())
            .collect();
        if !missing.is_empty() {
            self.diag(
                Category::WrongArgTypes,
                span,
                format!("Function {} is missing argument(s): {}", sig.name, missing.join(", ")),
            );
        }
    }
}

/// Bound names introduced by a statement in the function's own scope.
fn collect_stmt_bindings(s: &Stmt, out: &mut BTreeSet<String>) {
    fn target_names(e: &Expr, out: &mut BTreeSet<String>) {
        match &e.kind {
            ExprKind::Name(n) => {
                out.insert(n.id.clone());
            }
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                for i in items {
                    target_names(i, out);
                }
            }
            ExprKind::Starred(inner) => target_names(inner, out),
            _ => {}
        }
    }
    match &s.kind {
        StmtKind::Assign { targets, .. } => targets.iter().for_each(|t| target_names(t, out)),
        StmtKind::AnnAssign { target, value: Some(_), .. } | StmtKind::AugAssign { target, .. } => {
            target_names(target, out)
        }
        StmtKind::AnnAssign { target, value: None, .. } => target_names(target, out),
        StmtKind::For { target, .. } => target_names(target, out),
        StmtKind::With { items, .. } => {
            for i in items {
                if let Some(t) = &i.target {
                    target_names(t, out);
                }
            }
        }
        StmtKind::Try { handlers, .. } => {
            for h in handlers {
                if let Some(n) = &h.name {
                    out.insert(n.id.clone());
                }
            }
        }
        StmtKind::Delete(targets) => targets.iter().for_each(|t| target_names(t, out)),
        StmtKind::Import(import) => {
            out.extend(import.bound_names().into_iter().map(|n| n.id.clone()));
        }
        _ => {}
    }
}

/// Attribute stores on these always fail.
fn is_sealed_builtin(t: &TypeTerm) -> bool {
    !matches!(t, TypeTerm::Unknown | TypeTerm::Class(_) | TypeTerm::Function(_))
}

fn elem_type(t: &TypeTerm) -> TypeTerm {
    lift1(t, builtins::iter_elem).unwrap_or(TypeTerm::Unknown)
}

fn int_literal(e: &Expr) -> Option<i64> {
    match &e.kind {
        ExprKind::Literal(Literal::Int(s)) => s.parse().ok(),
        ExprKind::UnaryOp { op: UnaryOp::Neg, operand } => int_literal(operand).map(|v| -v),
        _ => None,
    }
}

/// Statically known truth value of simple constant tests.
fn constant_truth(e: &Expr) -> Option<bool> {
    match &e.kind {
        ExprKind::Literal(Literal::Bool(b)) => Some(*b),
        ExprKind::Literal(Literal::None) => Some(false),
        ExprKind::Literal(Literal::Int(s)) => s.parse::<i64>().ok().map(|v| v != 0),
        _ => None,
    }
}

/// Applies `f` to every member; `None` only when every member fails.
fn lift1(t: &TypeTerm, f: impl Fn(&TypeTerm) -> Option<TypeTerm>) -> Option<TypeTerm> {
    if t.is_unknown() {
        return Some(TypeTerm::Unknown);
    }
    let ok: Vec<TypeTerm> = t.members().iter().filter_map(f).collect();
    (!ok.is_empty()).then(|| TypeTerm::union_of(ok))
}

/// Applies `f` to every pair of members; `None` only when every pair fails.
fn lift2(l: &TypeTerm, r: &TypeTerm, f: impl Fn(&TypeTerm, &TypeTerm) -> Option<TypeTerm>) -> Option<TypeTerm> {
    if l.is_unknown() || r.is_unknown() {
        return Some(TypeTerm::Unknown);
    }
    let mut ok = Vec::new();
    for a in l.members() {
        for b in r.members() {
            if let Some(t) = f(a, b) {
                ok.push(t);
            }
        }
    }
    (!ok.is_empty()).then(|| TypeTerm::union_of(ok))
}
