//! Positioned syntax tree for a single function plus its module prelude.

use super::token::SourceSpan;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxTree {
    pub imports: Vec<Import>,
    /// Stub declarations written before the function in the same source.
    pub stubs: Vec<StubItem>,
    pub function: FunctionDef,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Name {
    pub id: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: Name,
    pub params: Vec<Param>,
    pub returns: Option<Expr>,
    pub body: Vec<Stmt>,
    pub span: SourceSpan,
    /// Index of the first token after the header's closing colon.
    pub body_start_token: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: Name,
    pub annotation: Option<Expr>,
    pub default: Option<Expr>,
    /// `*args` / `**kwargs`; only legal in stubs.
    pub variadic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImportKind {
    /// `import a.b as c`: (dotted module, alias)
    Modules(Vec<(String, Option<Name>, Name)>),
    /// `from m import x as y`
    From { module: String, names: Vec<(Name, Option<Name>)> },
    /// `from m import *`
    Star { module: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Import {
    pub kind: ImportKind,
    pub span: SourceSpan,
}

impl Import {
    /// Local names this import binds, with the token that binds them.
    pub fn bound_names(&self) -> Vec<&Name> {
        match &self.kind {
            ImportKind::Modules(mods) => mods
                .iter()
                .map(|(_, alias, first)| alias.as_ref().unwrap_or(first))
                .collect(),
            ImportKind::From { names, .. } => names
                .iter()
                .map(|(name, alias)| alias.as_ref().unwrap_or(name))
                .collect(),
            ImportKind::Star { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubFunction {
    pub name: Name,
    pub params: Vec<Param>,
    pub returns: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubClass {
    pub name: Name,
    pub attributes: Vec<(Name, Option<Expr>)>,
    pub methods: Vec<StubFunction>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StubItem {
    Function(StubFunction),
    Class(StubClass),
    Variable(Name, Option<Expr>),
}

impl StubItem {
    pub fn name(&self) -> &Name {
        match self {
            StubItem::Function(f) => &f.name,
            StubItem::Class(c) => &c.name,
            StubItem::Variable(n, _) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceptHandler {
    pub exc_type: Option<Expr>,
    pub name: Option<Name>,
    pub body: Vec<Stmt>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WithItem {
    pub context: Expr,
    pub target: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    /// `a = b = value`
    Assign { targets: Vec<Expr>, value: Expr },
    AnnAssign { target: Expr, annotation: Expr, value: Option<Expr> },
    AugAssign { target: Expr, op: BinOp, op_span: SourceSpan, value: Expr },
    Expr(Expr),
    Return(Option<Expr>),
    /// `elif` chains are nested `If` nodes in `orelse`.
    If { test: Expr, body: Vec<Stmt>, orelse: Vec<Stmt> },
    For { target: Expr, iter: Expr, body: Vec<Stmt>, orelse: Vec<Stmt> },
    While { test: Expr, body: Vec<Stmt>, orelse: Vec<Stmt> },
    Try { body: Vec<Stmt>, handlers: Vec<ExceptHandler>, orelse: Vec<Stmt>, finalbody: Vec<Stmt> },
    With { items: Vec<WithItem>, body: Vec<Stmt> },
    Pass,
    Break,
    Continue,
    Delete(Vec<Expr>),
    Assert { test: Expr, msg: Option<Expr> },
    Raise { exc: Option<Expr>, cause: Option<Expr> },
    Import(Import),
    Global(Vec<Name>),
    Nonlocal(Vec<Name>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    MatMul,
    Div,
    FloorDiv,
    Mod,
    Pow,
    LShift,
    RShift,
    BitOr,
    BitXor,
    BitAnd,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::MatMul => "@",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
            BinOp::LShift => "<<",
            BinOp::RShift => ">>",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::BitAnd => "&",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinOp> {
        Some(match s {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "@" => BinOp::MatMul,
            "/" => BinOp::Div,
            "//" => BinOp::FloorDiv,
            "%" => BinOp::Mod,
            "**" => BinOp::Pow,
            "<<" => BinOp::LShift,
            ">>" => BinOp::RShift,
            "|" => BinOp::BitOr,
            "^" => BinOp::BitXor,
            "&" => BinOp::BitAnd,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
    Pos,
    Invert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtE,
    Gt,
    GtE,
    Is,
    IsNot,
    In,
    NotIn,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtE => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtE => ">=",
            CmpOp::Is => "is",
            CmpOp::IsNot => "is not",
            CmpOp::In => "in",
            CmpOp::NotIn => "not in",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(String),
    Float(String),
    Complex(String),
    Str,
    /// f-strings are opaque: no occurrences are extracted from their interior.
    FormattedStr,
    Bytes,
    Bool(bool),
    None,
    Ellipsis,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Positional(Expr),
    Keyword(Name, Expr),
    Star(Expr),
    DoubleStar(Expr),
}

impl Arg {
    pub fn value(&self) -> &Expr {
        match self {
            Arg::Positional(e) | Arg::Keyword(_, e) | Arg::Star(e) | Arg::DoubleStar(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub target: Expr,
    pub iter: Expr,
    pub conditions: Vec<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComprehensionKind {
    List,
    Set,
    Dict,
    Generator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Name(Name),
    Literal(Literal),
    Tuple(Vec<Expr>),
    List(Vec<Expr>),
    Set(Vec<Expr>),
    /// `None` key marks a `**mapping` spread.
    Dict(Vec<(Option<Expr>, Expr)>),
    Attribute { value: Box<Expr>, attr: Name },
    Subscript { value: Box<Expr>, index: Box<Expr> },
    Slice { lower: Option<Box<Expr>>, upper: Option<Box<Expr>>, step: Option<Box<Expr>> },
    Call { func: Box<Expr>, args: Vec<Arg> },
    BinOp { left: Box<Expr>, op: BinOp, op_span: SourceSpan, right: Box<Expr> },
    UnaryOp { op: UnaryOp, operand: Box<Expr> },
    Compare { left: Box<Expr>, ops: Vec<(CmpOp, SourceSpan, Expr)> },
    BoolOp { op: BoolOp, values: Vec<Expr> },
    IfExp { test: Box<Expr>, body: Box<Expr>, orelse: Box<Expr> },
    /// Lambda bodies are opaque to analysis.
    Lambda,
    Comprehension {
        kind: ComprehensionKind,
        element: Box<Expr>,
        /// Value expression for dict comprehensions.
        value: Option<Box<Expr>>,
        generators: Vec<Generator>,
    },
    Starred(Box<Expr>),
    Yield(Option<Box<Expr>>),
    YieldFrom(Box<Expr>),
}

impl Expr {
    pub fn name(&self) -> Option<&Name> {
        match &self.kind {
            ExprKind::Name(n) => Some(n),
            _ => None,
        }
    }
}

impl Expr {
    /// Direct sub-expressions in evaluation-agnostic source order.
    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Name(_) | ExprKind::Literal(_) | ExprKind::Lambda => Vec::new(),
            ExprKind::Tuple(items) | ExprKind::List(items) | ExprKind::Set(items) => items.iter().collect(),
            ExprKind::Dict(entries) => entries
                .iter()
                .flat_map(|(k, v)| k.iter().chain(std::iter::once(v)))
                .collect(),
            ExprKind::Attribute { value, .. } => vec![value],
            ExprKind::Subscript { value, index } => vec![value, index],
            ExprKind::Slice { lower, upper, step } => {
                [lower, upper, step].into_iter().flatten().map(|b| &**b).collect()
            }
            ExprKind::Call { func, args } => {
                std::iter::once(&**func).chain(args.iter().map(Arg::value)).collect()
            }
            ExprKind::BinOp { left, right, .. } => vec![left, right],
            ExprKind::UnaryOp { operand, .. } => vec![operand],
            ExprKind::Compare { left, ops } => {
                std::iter::once(&**left).chain(ops.iter().map(|(_, _, e)| e)).collect()
            }
            ExprKind::BoolOp { values, .. } => values.iter().collect(),
            ExprKind::IfExp { test, body, orelse } => vec![body, test, orelse],
            ExprKind::Comprehension { element, value, generators, .. } => {
                let mut out: Vec<&Expr> = vec![element];
                out.extend(value.as_deref());
                for g in generators {
                    out.push(&g.target);
                    out.push(&g.iter);
                    out.extend(g.conditions.iter());
                }
                out
            }
            ExprKind::Starred(inner) | ExprKind::YieldFrom(inner) => vec![inner],
            ExprKind::Yield(v) => v.iter().map(|b| &**b).collect(),
        }
    }

    /// Pre-order walk over this expression and all sub-expressions.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }
}

impl Stmt {
    /// Expressions owned directly by this statement (not by nested blocks).
    pub fn expressions(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Assign { targets, value } => targets.iter().chain(std::iter::once(value)).collect(),
            StmtKind::AnnAssign { target, annotation, value } => {
                let mut v = vec![target, annotation];
                v.extend(value.iter());
                v
            }
            StmtKind::AugAssign { target, value, .. } => vec![target, value],
            StmtKind::Expr(e) => vec![e],
            StmtKind::Return(v) => v.iter().collect(),
            StmtKind::If { test, .. } | StmtKind::While { test, .. } => vec![test],
            StmtKind::For { target, iter, .. } => vec![target, iter],
            StmtKind::Try { handlers, .. } => handlers.iter().filter_map(|h| h.exc_type.as_ref()).collect(),
            StmtKind::With { items, .. } => items
                .iter()
                .flat_map(|i| std::iter::once(&i.context).chain(i.target.iter()))
                .collect(),
            StmtKind::Delete(targets) => targets.iter().collect(),
            StmtKind::Assert { test, msg } => std::iter::once(test).chain(msg.iter()).collect(),
            StmtKind::Raise { exc, cause } => exc.iter().chain(cause.iter()).collect(),
            StmtKind::Pass
            | StmtKind::Break
            | StmtKind::Continue
            | StmtKind::Import(_)
            | StmtKind::Global(_)
            | StmtKind::Nonlocal(_) => Vec::new(),
        }
    }

    /// Nested statement blocks, in source order.
    pub fn blocks(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::If { body, orelse, .. }
            | StmtKind::For { body, orelse, .. }
            | StmtKind::While { body, orelse, .. } => vec![body, orelse],
            StmtKind::Try { body, handlers, orelse, finalbody } => {
                let mut v: Vec<&[Stmt]> = vec![body];
                v.extend(handlers.iter().map(|h| h.body.as_slice()));
                v.push(orelse);
                v.push(finalbody);
                v
            }
            StmtKind::With { body, .. } => vec![body],
            _ => Vec::new(),
        }
    }
}

/// Pre-order walk over every statement in `stmts`, including nested blocks.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        for b in s.blocks() {
            walk_stmts(b, f);
        }
    }
}

/// Pre-order walk over every expression in `stmts`, including nested blocks.
pub fn walk_exprs<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    walk_stmts(stmts, &mut |s| {
        for e in s.expressions() {
            e.walk(f);
        }
    });
}
