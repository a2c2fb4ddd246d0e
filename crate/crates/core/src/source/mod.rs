//! Tokenizer, parser and identifier-occurrence extraction for function-level
//! Python source.

pub mod ast;
mod occurrences;
mod parser;
pub mod token;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use occurrences::identifier_occurrences;
pub use parser::{parse_function, parse_stub_module, StubModule};
pub use token::{render, tokenize, SourceSpan, Token, TokenKind, TAB_WIDTH};

use ast::SyntaxTree;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceError {
    #[error("lex error at {line}:{column}: {message}")]
    Lex { line: u32, column: u32, message: String },
    #[error("parse error at {line}:{column}: {message}")]
    Parse { line: u32, column: u32, message: String },
    #[error("unsupported syntax at {}:{}: {construct}", span.line, span.column)]
    Unsupported { span: SourceSpan, construct: String },
}

impl SourceError {
    pub fn line(&self) -> u32 {
        match self {
            SourceError::Lex { line, .. } | SourceError::Parse { line, .. } => *line,
            SourceError::Unsupported { span, .. } => span.line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Usage {
    Load,
    Store,
    Delete,
    Param,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IdentifierOccurrence {
    pub name: String,
    pub span: SourceSpan,
    pub usage: Usage,
}

/// A token stream together with the tree parsed from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSource {
    pub tokens: Vec<Token>,
    pub tree: SyntaxTree,
}

impl ParsedSource {
    pub fn occurrences(&self) -> Vec<IdentifierOccurrence> {
        identifier_occurrences(&self.tree)
    }
}

pub fn parse_source(source: &str) -> Result<ParsedSource, SourceError> {
    let tokens = tokenize(source)?;
    let tree = parse_function(&tokens)?;
    Ok(ParsedSource { tokens, tree })
}

pub fn parse_stubs(source: &str) -> Result<StubModule, SourceError> {
    let tokens = tokenize(source)?;
    parse_stub_module(&tokens)
}

#[cfg(test)]
mod tests {
    use super::ast::*;
    use super::*;

    pub(crate) const LISTING_BUGGY: &str = "def take_last_assignment(source):
    first=True
    last=None
    for assn in source:
        if first:
            last=assn
            first=False
        if (assn[1]!=first[1]):
            (yield last)
        last=assn
    if (last is not None):
        (yield last)
";

    #[test]
    fn simple_return() {
        let p = parse_source("def f():\n    return 1").unwrap();
        assert_eq!(p.tree.function.body.len(), 1);
        assert!(matches!(p.tree.function.body[0].kind, StmtKind::Return(Some(_))));
    }

    #[test]
    fn malformed_header_is_rejected() {
        assert!(parse_source("def f(:").is_err());
    }

    #[test]
    fn listing_has_for_with_nested_ifs() {
        let p = parse_source(LISTING_BUGGY).unwrap();
        let body = &p.tree.function.body;
        let StmtKind::For { body: loop_body, .. } = &body[2].kind else {
            panic!("expected for, got {:?}", body[2].kind)
        };
        let ifs = loop_body.iter().filter(|s| matches!(s.kind, StmtKind::If { .. })).count();
        assert_eq!(ifs, 2);
    }

    #[test]
    fn listing_first_on_line_8_is_a_load() {
        let p = parse_source(LISTING_BUGGY).unwrap();
        let tok = p
            .tokens
            .iter()
            .find(|t| t.span.line == 8 && t.text == "first")
            .expect("token on line 8");
        let occ = p.occurrences();
        let o = occ.iter().find(|o| o.span.token_index == tok.span.token_index).unwrap();
        assert_eq!(o.usage, Usage::Load);
        assert_eq!(o.name, "first");
    }

    #[test]
    fn unsupported_constructs() {
        let cases = [
            "async def f():\n    pass\n",
            "def f():\n    async def g():\n        pass\n",
            "def f():\n    def g():\n        pass\n",
            "def f():\n    class A:\n        pass\n",
            "@dec\ndef f():\n    pass\n",
            "def f(*args):\n    pass\n",
            "def f(**kw):\n    pass\n",
            "def f(a, *, b):\n    pass\n",
            "def f(x):\n    if (y := x):\n        pass\n",
            "def f(x):\n    await x\n",
            "def f(x):\n    match x:\n        case 1:\n            pass\n",
        ];
        for src in cases {
            let err = parse_source(src).unwrap_err();
            assert!(matches!(err, SourceError::Unsupported { .. }), "{src:?} -> {err:?}");
        }
    }

    #[test]
    fn match_as_a_name_is_fine() {
        parse_source("def f(match):\n    match = match + 1\n    return match(2)\n").unwrap();
    }

    #[test]
    fn statement_coverage() {
        let src = "import os
from a.b import c as d, e

def g(x: int, y=2) -> int:
    '''doc'''
    a, *b = x, y, 3
    a += 1
    z: int = 4
    del b
    assert a, 'msg'
    try:
        w = d(a)
    except (ValueError, KeyError) as exc:
        raise RuntimeError('x') from exc
    else:
        pass
    finally:
        pass
    with open(x) as fh, open(y):
        data = fh.read()
    while a < 10:
        a = a + 1
        if a == 5:
            break
        elif a == 6:
            continue
        else:
            pass
    else:
        pass
    q = [i * 2 for i in range(a) if i]
    r = {k: v for k, v in {}.items()}
    s = {1, 2}
    t = (i for i in q)
    u = lambda m: m + 1
    v = a if a else -a
    w2 = x[1:2, ::3]
    f'{a}'
    yield from q
    return not a and (b or z) is not None
";
        let p = parse_source(src).unwrap();
        assert_eq!(p.tree.imports.len(), 2);
        assert_eq!(p.tree.function.name.id, "g");
        assert!(p.tree.function.returns.is_some());
    }

    #[test]
    fn stubs_before_function() {
        let src = "class Point:
    x: int
    def norm(self) -> float: ...

def helper(a: int) -> str: ...

LIMIT: int

def f(p):
    return helper(p.x)
";
        let p = parse_source(src).unwrap();
        assert_eq!(p.tree.stubs.len(), 3);
        assert_eq!(p.tree.function.name.id, "f");
        match &p.tree.stubs[0] {
            StubItem::Class(c) => {
                assert_eq!(c.attributes.len(), 1);
                assert_eq!(c.methods.len(), 1);
                assert!(c.methods[0].params.is_empty(), "self is dropped");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_function_bodies_are_unsupported() {
        let src = "def a():\n    return 1\n\ndef b():\n    return 2\n";
        assert!(matches!(parse_source(src), Err(SourceError::Unsupported { .. })));
    }

    #[test]
    fn stub_module_allows_star_params() {
        let m = parse_stubs("def f(a, *args, **kw) -> int: ...\nclass C:\n    def m(self, x: str) -> None: ...\n").unwrap();
        assert_eq!(m.items.len(), 2);
    }

    #[test]
    fn deep_nesting_is_a_parse_error() {
        let src = format!("def f():\n    return {}1{}\n", "(".repeat(400), ")".repeat(400));
        assert!(parse_source(&src).is_err());
    }
}
