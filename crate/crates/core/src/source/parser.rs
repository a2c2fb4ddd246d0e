//! Recursive-descent parser for the supported subset.

use super::ast::*;
use super::token::{SourceSpan, Token, TokenKind};
use super::SourceError;

const MAX_DEPTH: usize = 64;

/// A parsed stub source: imports plus declarations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StubModule {
    pub imports: Vec<Import>,
    pub items: Vec<StubItem>,
}

pub fn parse_function(tokens: &[Token]) -> Result<SyntaxTree, SourceError> {
    let mut p = Parser::new(tokens);
    let mut imports = Vec::new();
    let mut stubs = Vec::new();
    let mut defs: Vec<(FunctionDef, bool)> = Vec::new();
    loop {
        p.skip_newlines();
        let Some(tok) = p.peek() else { break };
        if tok.kind == TokenKind::Dedent {
            p.bump();
            continue;
        }
        if let Some((def, _)) = defs.last() {
            if !p.at_kw("def") && !is_stub_body(&def.body) {
                return Err(SourceError::Unsupported {
                    span: tok.span,
                    construct: format!("statement after function `{}`", def.name.id),
                });
            }
        }
        if p.at_kw("def") {
            let (def, markers) = p.parse_funcdef()?;
            defs.push((def, markers));
        } else {
            p.parse_module_item(&mut imports, &mut stubs)?;
        }
    }
    let Some((function, markers)) = defs.pop() else {
        return Err(p.error_here("expected a function definition"));
    };
    for (def, _) in defs {
        match stub_from_def(&def) {
            Some(stub) => stubs.push(StubItem::Function(stub)),
            None => {
                return Err(SourceError::Unsupported {
                    span: def.span,
                    construct: "more than one function with a body".into(),
                })
            }
        }
    }
    if markers || function.params.iter().any(|p| p.variadic) {
        return Err(SourceError::Unsupported {
            span: function.span,
            construct: "star parameters in a function definition".into(),
        });
    }
    Ok(SyntaxTree { imports, stubs, function, token_count: tokens.len() })
}

pub fn parse_stub_module(tokens: &[Token]) -> Result<StubModule, SourceError> {
    let mut p = Parser::new(tokens);
    let mut module = StubModule::default();
    loop {
        p.skip_newlines();
        let Some(tok) = p.peek() else { break };
        if tok.kind == TokenKind::Dedent {
            p.bump();
            continue;
        }
        if p.at_kw("def") {
            let (def, _) = p.parse_funcdef()?;
            module.items.push(StubItem::Function(StubFunction {
                name: def.name,
                params: def.params,
                returns: def.returns,
            }));
        } else {
            p.parse_module_item(&mut module.imports, &mut module.items)?;
        }
    }
    Ok(module)
}

fn is_stub_body(body: &[Stmt]) -> bool {
    body.iter().all(|s| match &s.kind {
        StmtKind::Pass => true,
        StmtKind::Expr(e) => matches!(e.kind, ExprKind::Literal(Literal::Ellipsis | Literal::Str)),
        _ => false,
    })
}

fn stub_from_def(def: &FunctionDef) -> Option<StubFunction> {
    is_stub_body(&def.body).then(|| StubFunction {
        name: def.name.clone(),
        params: def.params.clone(),
        returns: def.returns.clone(),
    })
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    depth: usize,
}

impl<'t> Parser<'t> {
    fn new(tokens: &'t [Token]) -> Self {
        Parser { tokens, pos: 0, depth: 0 }
    }

    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_n(&self, n: usize) -> Option<&'t Token> {
        self.tokens.get(self.pos + n)
    }

    fn bump(&mut self) -> Option<&'t Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> SourceSpan {
        match self.peek() {
            Some(t) => t.span,
            None => self.tokens.last().map(|t| t.span).unwrap_or(SourceSpan {
                line: 1,
                column: 0,
                token_index: 0,
            }),
        }
    }

    fn error_here(&self, message: impl Into<String>) -> SourceError {
        let span = self.here();
        let found = match self.peek() {
            Some(t) if t.kind == TokenKind::Newline => "end of line".to_string(),
            Some(t) if t.kind == TokenKind::Indent => "indent".to_string(),
            Some(t) if t.kind == TokenKind::Dedent => "dedent".to_string(),
            Some(t) => format!("'{}'", t.text),
            None => "end of input".to_string(),
        };
        SourceError::Parse {
            line: span.line,
            column: span.column,
            message: format!("{}, found {found}", message.into()),
        }
    }

    fn unsupported(&self, construct: &str) -> SourceError {
        SourceError::Unsupported { span: self.here(), construct: construct.to_string() }
    }

    fn at_op(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.is_op(text))
    }

    fn at_kw(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(text))
    }

    fn at_kind(&self, kind: TokenKind) -> bool {
        self.peek().is_some_and(|t| t.kind == kind)
    }

    fn at_line_end(&self) -> bool {
        self.peek().is_none_or(|t| t.kind == TokenKind::Newline) || self.at_op(";")
    }

    fn eat_op(&mut self, text: &str) -> bool {
        if self.at_op(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, text: &str) -> bool {
        if self.at_kw(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, text: &str) -> Result<&'t Token, SourceError> {
        if self.at_op(text) {
            Ok(self.bump().expect("checked"))
        } else {
            Err(self.error_here(format!("expected '{text}'")))
        }
    }

    fn expect_kw(&mut self, text: &str) -> Result<(), SourceError> {
        if self.eat_kw(text) {
            Ok(())
        } else {
            Err(self.error_here(format!("expected '{text}'")))
        }
    }

    fn expect_name(&mut self) -> Result<Name, SourceError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(Name { id: t.text.clone(), span: t.span })
            }
            _ => Err(self.error_here("expected a name")),
        }
    }

    fn skip_newlines(&mut self) {
        while self.at_kind(TokenKind::Newline) {
            self.pos += 1;
        }
    }

    fn enter(&mut self) -> Result<(), SourceError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error_here("expression nested too deeply"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn check_forbidden(&self) -> Result<(), SourceError> {
        let Some(t) = self.peek() else { return Ok(()) };
        if t.is_op(":=") {
            return Err(self.unsupported("assignment expression (:=)"));
        }
        if t.is_keyword("await") {
            return Err(self.unsupported("await"));
        }
        if t.is_keyword("async") {
            return Err(self.unsupported("async"));
        }
        Ok(())
    }

    // ----- module level -----

    fn parse_module_item(
        &mut self,
        imports: &mut Vec<Import>,
        stubs: &mut Vec<StubItem>,
    ) -> Result<(), SourceError> {
        if self.at_kind(TokenKind::Indent) {
            return Err(self.error_here("unexpected indent"));
        }
        if self.at_op("@") {
            return Err(self.unsupported("decorator"));
        }
        if self.at_kw("async") {
            return Err(self.unsupported("async"));
        }
        if self.at_kw("import") || self.at_kw("from") {
            let stmt = self.parse_import()?;
            imports.push(stmt);
            return self.end_simple_line();
        }
        if self.at_kw("class") {
            let class = self.parse_stub_class()?;
            stubs.push(StubItem::Class(class));
            return Ok(());
        }
        if self.at_kind(TokenKind::Identifier) && self.peek_n(1).is_some_and(|t| t.is_op(":")) {
            let name = self.expect_name()?;
            self.expect_op(":")?;
            let annotation = self.parse_test()?;
            if self.eat_op("=") {
                self.parse_testlist_star()?;
            }
            stubs.push(StubItem::Variable(name, Some(annotation)));
            return self.end_simple_line();
        }
        if self.at_kind(TokenKind::String) || self.at_op("...") {
            // Module docstring or placeholder.
            self.parse_test()?;
            return self.end_simple_line();
        }
        Err(self.unsupported("module-level statement"))
    }

    fn end_simple_line(&mut self) -> Result<(), SourceError> {
        self.eat_op(";");
        match self.peek() {
            None => Ok(()),
            Some(t) if t.kind == TokenKind::Newline => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error_here("expected end of line")),
        }
    }

    fn parse_stub_class(&mut self) -> Result<StubClass, SourceError> {
        self.expect_kw("class")?;
        let name = self.expect_name()?;
        if self.eat_op("(") {
            while !self.at_op(")") {
                self.parse_test()?;
                if !self.eat_op(",") {
                    break;
                }
            }
            self.expect_op(")")?;
        }
        self.expect_op(":")?;
        let mut class = StubClass { name, attributes: Vec::new(), methods: Vec::new() };
        let inline = !self.at_kind(TokenKind::Newline);
        if inline {
            self.parse_class_member(&mut class)?;
            return Ok(class);
        }
        self.skip_newlines();
        if !self.at_kind(TokenKind::Indent) {
            return Err(self.error_here("expected an indented class body"));
        }
        self.bump();
        loop {
            self.skip_newlines();
            match self.peek() {
                None => break,
                Some(t) if t.kind == TokenKind::Dedent => {
                    self.bump();
                    break;
                }
                _ => self.parse_class_member(&mut class)?,
            }
        }
        Ok(class)
    }

    fn parse_class_member(&mut self, class: &mut StubClass) -> Result<(), SourceError> {
        if self.at_op("@") {
            return Err(self.unsupported("decorator"));
        }
        if self.at_kw("def") {
            let (def, _) = self.parse_funcdef()?;
            let mut params = def.params;
            if !params.is_empty() && !params[0].variadic {
                params.remove(0);
            }
            class.methods.push(StubFunction { name: def.name, params, returns: def.returns });
            return Ok(());
        }
        if self.eat_kw("pass") {
            return self.end_simple_line();
        }
        if self.at_kind(TokenKind::Identifier) {
            let next = self.peek_n(1);
            if next.is_some_and(|t| t.is_op(":")) {
                let name = self.expect_name()?;
                self.bump();
                let annotation = self.parse_test()?;
                if self.eat_op("=") {
                    self.parse_testlist_star()?;
                }
                class.attributes.push((name, Some(annotation)));
                return self.end_simple_line();
            }
            if next.is_some_and(|t| t.is_op("=")) {
                let name = self.expect_name()?;
                self.bump();
                self.parse_testlist_star()?;
                class.attributes.push((name, None));
                return self.end_simple_line();
            }
        }
        if self.at_kind(TokenKind::String) || self.at_op("...") {
            self.parse_test()?;
            return self.end_simple_line();
        }
        Err(self.unsupported("class body statement"))
    }

    fn parse_dotted(&mut self) -> Result<(String, Name), SourceError> {
        let first = self.expect_name()?;
        let mut dotted = first.id.clone();
        while self.eat_op(".") {
            let part = self.expect_name()?;
            dotted.push('.');
            dotted.push_str(&part.id);
        }
        Ok((dotted, first))
    }

    fn parse_import(&mut self) -> Result<Import, SourceError> {
        let span = self.here();
        if self.eat_kw("import") {
            let mut mods = Vec::new();
            loop {
                let (dotted, first) = self.parse_dotted()?;
                let alias = if self.eat_kw("as") { Some(self.expect_name()?) } else { None };
                mods.push((dotted, alias, first));
                if !self.eat_op(",") {
                    break;
                }
            }
            return Ok(Import { kind: ImportKind::Modules(mods), span });
        }
        self.expect_kw("from")?;
        let mut module = String::new();
        while self.at_op(".") || self.at_op("...") {
            module.push_str(&self.bump().expect("checked").text);
        }
        if self.at_kind(TokenKind::Identifier) {
            module.push_str(&self.parse_dotted()?.0);
        }
        self.expect_kw("import")?;
        if self.eat_op("*") {
            return Ok(Import { kind: ImportKind::Star { module }, span });
        }
        let parens = self.eat_op("(");
        let mut names = Vec::new();
        loop {
            if parens && self.at_op(")") {
                break;
            }
            let name = self.expect_name()?;
            let alias = if self.eat_kw("as") { Some(self.expect_name()?) } else { None };
            names.push((name, alias));
            if !self.eat_op(",") {
                break;
            }
        }
        if parens {
            self.expect_op(")")?;
        }
        Ok(Import { kind: ImportKind::From { module, names }, span })
    }

    // ----- functions and blocks -----

    /// Returns the definition and whether bare `*` or `/` markers appeared.
    fn parse_funcdef(&mut self) -> Result<(FunctionDef, bool), SourceError> {
        let span = self.here();
        self.expect_kw("def")?;
        let name = self.expect_name()?;
        self.expect_op("(")?;
        let mut params = Vec::new();
        let mut markers = false;
        while !self.at_op(")") {
            let variadic = self.eat_op("*") || self.eat_op("**");
            if (variadic && (self.at_op(",") || self.at_op(")"))) || self.at_op("/") {
                // Bare `*` or positional-only `/` marker.
                self.eat_op("/");
                markers = true;
            } else {
                let pname = self.expect_name()?;
                let annotation = if self.eat_op(":") { Some(self.parse_test()?) } else { None };
                let default = if self.eat_op("=") { Some(self.parse_test()?) } else { None };
                params.push(Param { name: pname, annotation, default, variadic });
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        let returns = if self.eat_op("->") { Some(self.parse_test()?) } else { None };
        self.expect_op(":")?;
        let body_start_token = self.pos;
        let body = self.parse_suite()?;
        Ok((FunctionDef { name, params, returns, body, span, body_start_token }, markers))
    }

    fn parse_suite(&mut self) -> Result<Vec<Stmt>, SourceError> {
        if !self.at_kind(TokenKind::Newline) {
            return self.parse_simple_line();
        }
        self.skip_newlines();
        if !self.at_kind(TokenKind::Indent) {
            return Err(self.error_here("expected an indented block"));
        }
        self.bump();
        let mut stmts = Vec::new();
        loop {
            self.skip_newlines();
            match self.peek() {
                None => break,
                Some(t) if t.kind == TokenKind::Dedent => {
                    self.bump();
                    break;
                }
                Some(t) if t.kind == TokenKind::Indent => {
                    return Err(self.error_here("unexpected indent"));
                }
                _ => stmts.extend(self.parse_statement()?),
            }
        }
        if stmts.is_empty() {
            return Err(self.error_here("empty block"));
        }
        Ok(stmts)
    }

    fn parse_statement(&mut self) -> Result<Vec<Stmt>, SourceError> {
        let Some(tok) = self.peek() else {
            return Err(self.error_here("expected a statement"));
        };
        if tok.kind == TokenKind::Keyword {
            match tok.text.as_str() {
                "if" => return Ok(vec![self.parse_if()?]),
                "while" => return Ok(vec![self.parse_while()?]),
                "for" => return Ok(vec![self.parse_for()?]),
                "try" => return Ok(vec![self.parse_try()?]),
                "with" => return Ok(vec![self.parse_with()?]),
                "def" => return Err(self.unsupported("nested function definition")),
                "class" => return Err(self.unsupported("class definition inside a function")),
                "async" => return Err(self.unsupported("async")),
                _ => {}
            }
        }
        if tok.is_op("@") {
            return Err(self.unsupported("decorator"));
        }
        if tok.kind == TokenKind::Identifier && tok.text == "match" && self.looks_like_match() {
            return Err(self.unsupported("match statement"));
        }
        self.parse_simple_line()
    }

    /// `match <subject>:` header, as opposed to a name called `match`.
    fn looks_like_match(&self) -> bool {
        let Some(next) = self.peek_n(1) else { return false };
        let starts_expr = match next.kind {
            TokenKind::Identifier | TokenKind::Number | TokenKind::String => true,
            TokenKind::Keyword => matches!(next.text.as_str(), "None" | "True" | "False" | "not"),
            TokenKind::Delimiter => next.text == "[" || next.text == "{",
            _ => false,
        };
        if !starts_expr {
            return false;
        }
        let mut i = self.pos + 1;
        let mut last = None;
        while let Some(t) = self.tokens.get(i) {
            if t.kind == TokenKind::Newline {
                break;
            }
            last = Some(t);
            i += 1;
        }
        last.is_some_and(|t| t.is_op(":"))
    }

    fn parse_simple_line(&mut self) -> Result<Vec<Stmt>, SourceError> {
        let mut stmts = vec![self.parse_simple_statement()?];
        while self.eat_op(";") {
            if self.at_line_end() {
                break;
            }
            stmts.push(self.parse_simple_statement()?);
        }
        match self.peek() {
            None => {}
            Some(t) if t.kind == TokenKind::Newline => self.pos += 1,
            _ => return Err(self.error_here("expected end of statement")),
        }
        Ok(stmts)
    }

    fn parse_simple_statement(&mut self) -> Result<Stmt, SourceError> {
        let span = self.here();
        self.check_forbidden()?;
        let kind = if self.eat_kw("pass") {
            StmtKind::Pass
        } else if self.eat_kw("break") {
            StmtKind::Break
        } else if self.eat_kw("continue") {
            StmtKind::Continue
        } else if self.eat_kw("return") {
            let value = if self.at_line_end() { None } else { Some(self.parse_testlist_star()?) };
            StmtKind::Return(value)
        } else if self.eat_kw("raise") {
            let exc = if self.at_line_end() { None } else { Some(self.parse_test()?) };
            let cause = if exc.is_some() && self.eat_kw("from") { Some(self.parse_test()?) } else { None };
            StmtKind::Raise { exc, cause }
        } else if self.eat_kw("del") {
            let mut targets = vec![self.parse_expr_or_star()?];
            while self.eat_op(",") {
                if self.at_line_end() {
                    break;
                }
                targets.push(self.parse_expr_or_star()?);
            }
            StmtKind::Delete(targets)
        } else if self.eat_kw("assert") {
            let test = self.parse_test()?;
            let msg = if self.eat_op(",") { Some(self.parse_test()?) } else { None };
            StmtKind::Assert { test, msg }
        } else if self.eat_kw("global") {
            StmtKind::Global(self.parse_name_list()?)
        } else if self.eat_kw("nonlocal") {
            StmtKind::Nonlocal(self.parse_name_list()?)
        } else if self.at_kw("import") || self.at_kw("from") {
            StmtKind::Import(self.parse_import()?)
        } else {
            self.parse_expr_statement()?
        };
        Ok(Stmt { kind, span })
    }

    fn parse_name_list(&mut self) -> Result<Vec<Name>, SourceError> {
        let mut names = vec![self.expect_name()?];
        while self.eat_op(",") {
            names.push(self.expect_name()?);
        }
        Ok(names)
    }

    fn parse_expr_statement(&mut self) -> Result<StmtKind, SourceError> {
        let first = self.parse_testlist_star_or_yield()?;
        if self.at_op(":") {
            self.bump();
            let annotation = self.parse_test()?;
            let value = if self.eat_op("=") { Some(self.parse_testlist_star_or_yield()?) } else { None };
            return Ok(StmtKind::AnnAssign { target: first, annotation, value });
        }
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Operator && tok.text.len() >= 2 && tok.text.ends_with('=') {
                let sym = &tok.text[..tok.text.len() - 1];
                if let Some(op) = BinOp::from_symbol(sym) {
                    if !matches!(tok.text.as_str(), "==" | "!=" | "<=" | ">=") {
                        self.bump();
                        let value = self.parse_testlist_star_or_yield()?;
                        return Ok(StmtKind::AugAssign { target: first, op, op_span: tok.span, value });
                    }
                }
            }
        }
        if self.at_op("=") {
            let mut targets = vec![first];
            let mut value;
            loop {
                self.expect_op("=")?;
                value = self.parse_testlist_star_or_yield()?;
                if !self.at_op("=") {
                    break;
                }
                targets.push(value);
            }
            return Ok(StmtKind::Assign { targets, value });
        }
        self.check_forbidden()?;
        Ok(StmtKind::Expr(first))
    }

    fn parse_if(&mut self) -> Result<Stmt, SourceError> {
        let span = self.here();
        self.bump(); // `if` or `elif`
        let test = self.parse_test()?;
        self.expect_op(":")?;
        let body = self.parse_suite()?;
        let orelse = self.parse_else_chain()?;
        Ok(Stmt { kind: StmtKind::If { test, body, orelse }, span })
    }

    fn parse_else_chain(&mut self) -> Result<Vec<Stmt>, SourceError> {
        if self.at_kw("elif") {
            return Ok(vec![self.parse_if()?]);
        }
        if self.eat_kw("else") {
            self.expect_op(":")?;
            return self.parse_suite();
        }
        Ok(Vec::new())
    }

    fn parse_loop_else(&mut self) -> Result<Vec<Stmt>, SourceError> {
        if self.eat_kw("else") {
            self.expect_op(":")?;
            return self.parse_suite();
        }
        Ok(Vec::new())
    }

    fn parse_while(&mut self) -> Result<Stmt, SourceError> {
        let span = self.here();
        self.expect_kw("while")?;
        let test = self.parse_test()?;
        self.expect_op(":")?;
        let body = self.parse_suite()?;
        let orelse = self.parse_loop_else()?;
        Ok(Stmt { kind: StmtKind::While { test, body, orelse }, span })
    }

    fn parse_for(&mut self) -> Result<Stmt, SourceError> {
        let span = self.here();
        self.expect_kw("for")?;
        let target = self.parse_target_list()?;
        self.expect_kw("in")?;
        let iter = self.parse_testlist_star()?;
        self.expect_op(":")?;
        let body = self.parse_suite()?;
        let orelse = self.parse_loop_else()?;
        Ok(Stmt { kind: StmtKind::For { target, iter, body, orelse }, span })
    }

    fn parse_try(&mut self) -> Result<Stmt, SourceError> {
        let span = self.here();
        self.expect_kw("try")?;
        self.expect_op(":")?;
        let body = self.parse_suite()?;
        let mut handlers = Vec::new();
        while self.at_kw("except") {
            let hspan = self.here();
            self.bump();
            if self.at_op("*") {
                return Err(self.unsupported("except*"));
            }
            let mut exc_type = None;
            let mut name = None;
            if !self.at_op(":") {
                exc_type = Some(self.parse_test()?);
                if self.eat_kw("as") {
                    name = Some(self.expect_name()?);
                } else if self.eat_op(",") {
                    return Err(self.unsupported("Python 2 except clause"));
                }
            }
            self.expect_op(":")?;
            let hbody = self.parse_suite()?;
            handlers.push(ExceptHandler { exc_type, name, body: hbody, span: hspan });
        }
        let orelse = if !handlers.is_empty() && self.eat_kw("else") {
            self.expect_op(":")?;
            self.parse_suite()?
        } else {
            Vec::new()
        };
        let finalbody = if self.eat_kw("finally") {
            self.expect_op(":")?;
            self.parse_suite()?
        } else {
            Vec::new()
        };
        if handlers.is_empty() && finalbody.is_empty() {
            return Err(self.error_here("expected 'except' or 'finally'"));
        }
        Ok(Stmt { kind: StmtKind::Try { body, handlers, orelse, finalbody }, span })
    }

    fn parse_with(&mut self) -> Result<Stmt, SourceError> {
        let span = self.here();
        self.expect_kw("with")?;
        let mut items = Vec::new();
        loop {
            let context = self.parse_test()?;
            let target = if self.eat_kw("as") { Some(self.parse_target()?) } else { None };
            items.push(WithItem { context, target });
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(":")?;
        let body = self.parse_suite()?;
        Ok(Stmt { kind: StmtKind::With { items, body }, span })
    }

    // ----- expressions -----

    fn parse_testlist_star_or_yield(&mut self) -> Result<Expr, SourceError> {
        if self.at_kw("yield") {
            return self.parse_yield();
        }
        self.parse_testlist_star()
    }

    fn parse_yield(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        self.expect_kw("yield")?;
        if self.eat_kw("from") {
            let value = self.parse_test()?;
            return Ok(Expr { kind: ExprKind::YieldFrom(Box::new(value)), span });
        }
        let value = if self.at_line_end() || self.at_op(")") || self.at_op("=") {
            None
        } else {
            Some(Box::new(self.parse_testlist_star()?))
        };
        Ok(Expr { kind: ExprKind::Yield(value), span })
    }

    /// Comma-separated tests (with starred items); a trailing comma or more
    /// than one item yields a tuple.
    fn parse_testlist_star(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        let first = self.parse_test_or_star()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_tuple_end() {
                break;
            }
            items.push(self.parse_test_or_star()?);
        }
        Ok(Expr { kind: ExprKind::Tuple(items), span })
    }

    fn at_tuple_end(&self) -> bool {
        self.at_line_end()
            || self.at_op("=")
            || self.at_op(")")
            || self.at_op(":")
            || self.at_op("]")
            || self.at_op("}")
            || self
                .peek()
                .is_some_and(|t| t.kind == TokenKind::Operator && t.text.ends_with('=') && t.text.len() >= 2 && !matches!(t.text.as_str(), "==" | "!=" | "<=" | ">="))
    }

    fn parse_test_or_star(&mut self) -> Result<Expr, SourceError> {
        if self.at_op("*") {
            let span = self.here();
            self.bump();
            let inner = self.parse_expr()?;
            return Ok(Expr { kind: ExprKind::Starred(Box::new(inner)), span });
        }
        self.parse_test()
    }

    fn parse_expr_or_star(&mut self) -> Result<Expr, SourceError> {
        if self.at_op("*") {
            let span = self.here();
            self.bump();
            let inner = self.parse_expr()?;
            return Ok(Expr { kind: ExprKind::Starred(Box::new(inner)), span });
        }
        self.parse_expr()
    }

    /// Targets of `for` and comprehensions: bitwise-level expressions so
    /// that `in` is not consumed as a comparison.
    fn parse_target_list(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        let first = self.parse_expr_or_star()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_kw("in") {
                break;
            }
            items.push(self.parse_expr_or_star()?);
        }
        Ok(Expr { kind: ExprKind::Tuple(items), span })
    }

    fn parse_target(&mut self) -> Result<Expr, SourceError> {
        self.parse_expr()
    }

    fn parse_test(&mut self) -> Result<Expr, SourceError> {
        self.enter()?;
        let r = self.parse_test_inner();
        self.leave();
        r
    }

    fn parse_test_inner(&mut self) -> Result<Expr, SourceError> {
        self.check_forbidden()?;
        if self.at_kw("lambda") {
            return self.parse_lambda();
        }
        let span = self.here();
        let body = self.parse_or()?;
        if self.at_kw("if") {
            self.bump();
            let test = self.parse_or()?;
            self.expect_kw("else")?;
            let orelse = self.parse_test()?;
            return Ok(Expr {
                kind: ExprKind::IfExp { test: Box::new(test), body: Box::new(body), orelse: Box::new(orelse) },
                span,
            });
        }
        if self.at_op(":=") {
            return Err(self.unsupported("assignment expression (:=)"));
        }
        Ok(body)
    }

    fn parse_test_nocond(&mut self) -> Result<Expr, SourceError> {
        if self.at_kw("lambda") {
            return self.parse_lambda();
        }
        self.parse_or()
    }

    fn parse_lambda(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        self.expect_kw("lambda")?;
        while !self.at_op(":") {
            if (self.eat_op("*") || self.eat_op("**")) && (self.at_op(",") || self.at_op(":")) {
                self.eat_op(",");
                continue;
            }
            self.expect_name()?;
            if self.eat_op("=") {
                self.parse_test()?;
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(":")?;
        self.parse_test()?;
        Ok(Expr { kind: ExprKind::Lambda, span })
    }

    fn parse_or(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        let first = self.parse_and()?;
        if !self.at_kw("or") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw("or") {
            values.push(self.parse_and()?);
        }
        Ok(Expr { kind: ExprKind::BoolOp { op: BoolOp::Or, values }, span })
    }

    fn parse_and(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        let first = self.parse_not()?;
        if !self.at_kw("and") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw("and") {
            values.push(self.parse_not()?);
        }
        Ok(Expr { kind: ExprKind::BoolOp { op: BoolOp::And, values }, span })
    }

    fn parse_not(&mut self) -> Result<Expr, SourceError> {
        if self.at_kw("not") {
            let span = self.here();
            self.bump();
            self.enter()?;
            let operand = self.parse_not();
            self.leave();
            return Ok(Expr { kind: ExprKind::UnaryOp { op: UnaryOp::Not, operand: Box::new(operand?) }, span });
        }
        self.parse_comparison()
    }

    fn comparison_op(&mut self) -> Option<(CmpOp, SourceSpan)> {
        let tok = self.peek()?;
        let span = tok.span;
        let op = match (tok.kind, tok.text.as_str()) {
            (TokenKind::Operator, "==") => CmpOp::Eq,
            (TokenKind::Operator, "!=") => CmpOp::NotEq,
            (TokenKind::Operator, "<") => CmpOp::Lt,
            (TokenKind::Operator, "<=") => CmpOp::LtE,
            (TokenKind::Operator, ">") => CmpOp::Gt,
            (TokenKind::Operator, ">=") => CmpOp::GtE,
            (TokenKind::Keyword, "in") => CmpOp::In,
            (TokenKind::Keyword, "is") => {
                if self.peek_n(1).is_some_and(|t| t.is_keyword("not")) {
                    self.pos += 2;
                    return Some((CmpOp::IsNot, span));
                }
                CmpOp::Is
            }
            (TokenKind::Keyword, "not") if self.peek_n(1).is_some_and(|t| t.is_keyword("in")) => {
                self.pos += 2;
                return Some((CmpOp::NotIn, span));
            }
            _ => return None,
        };
        self.pos += 1;
        Some((op, span))
    }

    fn parse_comparison(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        let left = self.parse_expr()?;
        let mut ops = Vec::new();
        while let Some((op, op_span)) = self.comparison_op() {
            ops.push((op, op_span, self.parse_expr()?));
        }
        if ops.is_empty() {
            return Ok(left);
        }
        Ok(Expr { kind: ExprKind::Compare { left: Box::new(left), ops }, span })
    }

    fn parse_binary_level(
        &mut self,
        ops: &[&str],
        next: fn(&mut Self) -> Result<Expr, SourceError>,
    ) -> Result<Expr, SourceError> {
        let span = self.here();
        let mut left = next(self)?;
        while let Some(tok) = self.peek() {
            if tok.kind != TokenKind::Operator || !ops.contains(&tok.text.as_str()) {
                break;
            }
            let op = BinOp::from_symbol(&tok.text).expect("listed operator");
            let op_span = tok.span;
            self.bump();
            let right = next(self)?;
            left = Expr {
                kind: ExprKind::BinOp { left: Box::new(left), op, op_span, right: Box::new(right) },
                span,
            };
        }
        Ok(left)
    }

    fn parse_expr(&mut self) -> Result<Expr, SourceError> {
        self.parse_binary_level(&["|"], Self::parse_xor)
    }

    fn parse_xor(&mut self) -> Result<Expr, SourceError> {
        self.parse_binary_level(&["^"], Self::parse_bitand)
    }

    fn parse_bitand(&mut self) -> Result<Expr, SourceError> {
        self.parse_binary_level(&["&"], Self::parse_shift)
    }

    fn parse_shift(&mut self) -> Result<Expr, SourceError> {
        self.parse_binary_level(&["<<", ">>"], Self::parse_arith)
    }

    fn parse_arith(&mut self) -> Result<Expr, SourceError> {
        self.parse_binary_level(&["+", "-"], Self::parse_term)
    }

    fn parse_term(&mut self) -> Result<Expr, SourceError> {
        self.parse_binary_level(&["*", "@", "/", "%", "//"], Self::parse_factor)
    }

    fn parse_factor(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        let op = match self.peek() {
            Some(t) if t.is_op("-") => Some(UnaryOp::Neg),
            Some(t) if t.is_op("+") => Some(UnaryOp::Pos),
            Some(t) if t.is_op("~") => Some(UnaryOp::Invert),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            self.enter()?;
            let operand = self.parse_factor();
            self.leave();
            return Ok(Expr { kind: ExprKind::UnaryOp { op, operand: Box::new(operand?) }, span });
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, SourceError> {
        self.check_forbidden()?;
        let span = self.here();
        let base = self.parse_atom_expr()?;
        if self.at_op("**") {
            let op_span = self.here();
            self.bump();
            self.enter()?;
            let exp = self.parse_factor();
            self.leave();
            return Ok(Expr {
                kind: ExprKind::BinOp { left: Box::new(base), op: BinOp::Pow, op_span, right: Box::new(exp?) },
                span,
            });
        }
        Ok(base)
    }

    fn parse_atom_expr(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        let mut expr = self.parse_atom()?;
        loop {
            if self.eat_op("(") {
                let args = self.parse_call_args()?;
                self.expect_op(")")?;
                expr = Expr { kind: ExprKind::Call { func: Box::new(expr), args }, span };
            } else if self.eat_op("[") {
                let index = self.parse_subscript_list()?;
                self.expect_op("]")?;
                expr = Expr { kind: ExprKind::Subscript { value: Box::new(expr), index: Box::new(index) }, span };
            } else if self.at_op(".") {
                self.bump();
                let attr = self.expect_name()?;
                expr = Expr { kind: ExprKind::Attribute { value: Box::new(expr), attr }, span };
            } else {
                break;
            }
        }
        Ok(expr)
    }

    fn parse_call_args(&mut self) -> Result<Vec<Arg>, SourceError> {
        let mut args = Vec::new();
        while !self.at_op(")") {
            if self.eat_op("**") {
                args.push(Arg::DoubleStar(self.parse_test()?));
            } else if self.eat_op("*") {
                args.push(Arg::Star(self.parse_test()?));
            } else if self.at_kind(TokenKind::Identifier) && self.peek_n(1).is_some_and(|t| t.is_op("=")) {
                let name = self.expect_name()?;
                self.bump();
                args.push(Arg::Keyword(name, self.parse_test()?));
            } else {
                let span = self.here();
                let value = self.parse_test()?;
                if self.at_kw("for") {
                    let generators = self.parse_comp_for()?;
                    args.push(Arg::Positional(Expr {
                        kind: ExprKind::Comprehension {
                            kind: ComprehensionKind::Generator,
                            element: Box::new(value),
                            value: None,
                            generators,
                        },
                        span,
                    }));
                } else {
                    args.push(Arg::Positional(value));
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(args)
    }

    fn parse_subscript_list(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        let first = self.parse_subscript()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("]") {
                break;
            }
            items.push(self.parse_subscript()?);
        }
        Ok(Expr { kind: ExprKind::Tuple(items), span })
    }

    fn parse_subscript(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        let lower = if self.at_op(":") { None } else { Some(self.parse_test_or_star()?) };
        if !self.at_op(":") {
            return lower.ok_or_else(|| self.error_here("expected a subscript"));
        }
        self.bump();
        let upper = if self.at_op(":") || self.at_op("]") || self.at_op(",") {
            None
        } else {
            Some(Box::new(self.parse_test()?))
        };
        let step = if self.eat_op(":") {
            if self.at_op("]") || self.at_op(",") {
                None
            } else {
                Some(Box::new(self.parse_test()?))
            }
        } else {
            None
        };
        Ok(Expr { kind: ExprKind::Slice { lower: lower.map(Box::new), upper, step }, span })
    }

    fn parse_comp_for(&mut self) -> Result<Vec<Generator>, SourceError> {
        let mut generators = Vec::new();
        while self.at_kw("for") || self.at_kw("async") {
            if self.at_kw("async") {
                return Err(self.unsupported("async comprehension"));
            }
            self.bump();
            let target = self.parse_target_list()?;
            self.expect_kw("in")?;
            let iter = self.parse_or()?;
            let mut conditions = Vec::new();
            while self.eat_kw("if") {
                conditions.push(self.parse_test_nocond()?);
            }
            generators.push(Generator { target, iter, conditions });
        }
        Ok(generators)
    }

    fn parse_atom(&mut self) -> Result<Expr, SourceError> {
        self.check_forbidden()?;
        let Some(tok) = self.peek() else {
            return Err(self.error_here("expected an expression"));
        };
        let span = tok.span;
        match tok.kind {
            TokenKind::Identifier => {
                self.bump();
                Ok(Expr { kind: ExprKind::Name(Name { id: tok.text.clone(), span }), span })
            }
            TokenKind::Number => {
                self.bump();
                let text = tok.text.replace('_', "");
                let lower = text.to_ascii_lowercase();
                let lit = if lower.ends_with('j') {
                    Literal::Complex(text)
                } else if !lower.starts_with("0x")
                    && (lower.contains('.') || lower.contains('e'))
                {
                    Literal::Float(text)
                } else {
                    Literal::Int(text)
                };
                Ok(Expr { kind: ExprKind::Literal(lit), span })
            }
            TokenKind::String => {
                let mut lit = None;
                while let Some(t) = self.peek().filter(|t| t.kind == TokenKind::String) {
                    self.bump();
                    let prefix: String = t
                        .text
                        .chars()
                        .take_while(|c| *c != '\'' && *c != '"')
                        .collect::<String>()
                        .to_ascii_lowercase();
                    let this = if prefix.contains('b') {
                        Literal::Bytes
                    } else if prefix.contains('f') {
                        Literal::FormattedStr
                    } else {
                        Literal::Str
                    };
                    lit = Some(match (lit, this) {
                        (None, this) => this,
                        (Some(Literal::Bytes), Literal::Bytes) => Literal::Bytes,
                        (Some(Literal::Bytes), _) | (Some(_), Literal::Bytes) => {
                            return Err(SourceError::Parse {
                                line: t.span.line,
                                column: t.span.column,
                                message: "cannot mix bytes and str literals".into(),
                            })
                        }
                        (Some(Literal::FormattedStr), _) | (_, Literal::FormattedStr) => Literal::FormattedStr,
                        _ => Literal::Str,
                    });
                }
                Ok(Expr { kind: ExprKind::Literal(lit.expect("at least one string")), span })
            }
            TokenKind::Keyword => match tok.text.as_str() {
                "None" => {
                    self.bump();
                    Ok(Expr { kind: ExprKind::Literal(Literal::None), span })
                }
                "True" | "False" => {
                    self.bump();
                    Ok(Expr { kind: ExprKind::Literal(Literal::Bool(tok.text == "True")), span })
                }
                "yield" => Err(self.error_here("yield expression must be parenthesized")),
                _ => Err(self.error_here("expected an expression")),
            },
            TokenKind::Delimiter | TokenKind::Operator => match tok.text.as_str() {
                "..." => {
                    self.bump();
                    Ok(Expr { kind: ExprKind::Literal(Literal::Ellipsis), span })
                }
                "(" => self.parse_paren(),
                "[" => self.parse_list(),
                "{" => self.parse_brace(),
                "`" => Err(self.unsupported("backtick repr")),
                _ => Err(self.error_here("expected an expression")),
            },
            _ => Err(self.error_here("expected an expression")),
        }
    }

    fn parse_paren(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        self.expect_op("(")?;
        if self.eat_op(")") {
            return Ok(Expr { kind: ExprKind::Tuple(Vec::new()), span });
        }
        if self.at_kw("yield") {
            let y = self.parse_yield()?;
            self.expect_op(")")?;
            return Ok(y);
        }
        let first = self.parse_test_or_star()?;
        if self.at_kw("for") {
            let generators = self.parse_comp_for()?;
            self.expect_op(")")?;
            return Ok(Expr {
                kind: ExprKind::Comprehension {
                    kind: ComprehensionKind::Generator,
                    element: Box::new(first),
                    value: None,
                    generators,
                },
                span,
            });
        }
        if self.eat_op(")") {
            if matches!(first.kind, ExprKind::Starred(_)) {
                return Err(self.error_here("starred expression outside a tuple"));
            }
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op(")") {
                break;
            }
            items.push(self.parse_test_or_star()?);
        }
        self.expect_op(")")?;
        Ok(Expr { kind: ExprKind::Tuple(items), span })
    }

    fn parse_list(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        self.expect_op("[")?;
        if self.eat_op("]") {
            return Ok(Expr { kind: ExprKind::List(Vec::new()), span });
        }
        let first = self.parse_test_or_star()?;
        if self.at_kw("for") {
            let generators = self.parse_comp_for()?;
            self.expect_op("]")?;
            return Ok(Expr {
                kind: ExprKind::Comprehension {
                    kind: ComprehensionKind::List,
                    element: Box::new(first),
                    value: None,
                    generators,
                },
                span,
            });
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("]") {
                break;
            }
            items.push(self.parse_test_or_star()?);
        }
        self.expect_op("]")?;
        Ok(Expr { kind: ExprKind::List(items), span })
    }

    fn parse_brace(&mut self) -> Result<Expr, SourceError> {
        let span = self.here();
        self.expect_op("{")?;
        if self.eat_op("}") {
            return Ok(Expr { kind: ExprKind::Dict(Vec::new()), span });
        }
        if self.at_op("**") {
            return self.parse_dict_rest(span, None);
        }
        let first = self.parse_test_or_star()?;
        if self.eat_op(":") {
            let value = self.parse_test()?;
            if self.at_kw("for") {
                let generators = self.parse_comp_for()?;
                self.expect_op("}")?;
                return Ok(Expr {
                    kind: ExprKind::Comprehension {
                        kind: ComprehensionKind::Dict,
                        element: Box::new(first),
                        value: Some(Box::new(value)),
                        generators,
                    },
                    span,
                });
            }
            return self.parse_dict_rest(span, Some((Some(first), value)));
        }
        if self.at_kw("for") {
            let generators = self.parse_comp_for()?;
            self.expect_op("}")?;
            return Ok(Expr {
                kind: ExprKind::Comprehension {
                    kind: ComprehensionKind::Set,
                    element: Box::new(first),
                    value: None,
                    generators,
                },
                span,
            });
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("}") {
                break;
            }
            items.push(self.parse_test_or_star()?);
        }
        self.expect_op("}")?;
        Ok(Expr { kind: ExprKind::Set(items), span })
    }

    fn parse_dict_rest(
        &mut self,
        span: SourceSpan,
        first: Option<(Option<Expr>, Expr)>,
    ) -> Result<Expr, SourceError> {
        let mut entries = Vec::new();
        let mut need_item = first.is_none();
        if let Some(entry) = first {
            entries.push(entry);
        }
        loop {
            if need_item {
                if self.at_op("}") {
                    break;
                }
                if self.eat_op("**") {
                    entries.push((None, self.parse_expr()?));
                } else {
                    let key = self.parse_test()?;
                    self.expect_op(":")?;
                    let value = self.parse_test()?;
                    entries.push((Some(key), value));
                }
            }
            if !self.eat_op(",") {
                break;
            }
            need_item = true;
        }
        self.expect_op("}")?;
        Ok(Expr { kind: ExprKind::Dict(entries), span })
    }
}
