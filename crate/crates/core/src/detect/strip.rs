//! Token-wise removal of type annotations: `: T` on parameters, `-> T` on
//! definitions and variable annotations. Line numbers are preserved; a bare
//! `x: T` statement becomes `pass`.

use crate::source::{tokenize, SourceError, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub source: String,
    /// For each token of the stripped source, the index of the original
    /// token it came from.
    pub origin: Vec<usize>,
}

impl Stripped {
    pub fn original_token(&self, stripped_index: usize) -> Option<usize> {
        self.origin.get(stripped_index).copied()
    }
}

fn opens(t: &Token) -> bool {
    matches!(t.kind, TokenKind::Delimiter | TokenKind::Operator) && matches!(t.text.as_str(), "(" | "[" | "{")
}

fn closes(t: &Token) -> bool {
    matches!(t.kind, TokenKind::Delimiter | TokenKind::Operator) && matches!(t.text.as_str(), ")" | "]" | "}")
}

fn is_logical_end(t: &Token) -> bool {
    matches!(t.kind, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent) || t.is_op(";")
}

fn is_assign_op(t: &Token) -> bool {
    matches!(t.kind, TokenKind::Operator | TokenKind::Delimiter)
        && t.text.ends_with('=')
        && !matches!(t.text.as_str(), "==" | "!=" | "<=" | ">=")
}

/// Marks `[from, to)` for removal.
fn mark(remove: &mut [bool], from: usize, to: usize) {
    for r in &mut remove[from..to] {
        *r = true;
    }
}

/// Index of the first token at bracket depth 0 (relative to `start`)
/// satisfying `stop`, or the end of the logical line.
fn scan_to(tokens: &[Token], start: usize, stop: impl Fn(&Token) -> bool) -> usize {
    let mut depth = 0usize;
    let mut i = start;
    while i < tokens.len() {
        let t = &tokens[i];
        if depth == 0 && (stop(t) || is_logical_end(t) || closes(t)) {
            return i;
        }
        if opens(t) {
            depth += 1;
        } else if closes(t) {
            depth -= 1;
        }
        i += 1;
    }
    i
}

fn strip_header(tokens: &[Token], def_index: usize, remove: &mut [bool]) {
    let Some(open) = (def_index..tokens.len()).find(|&i| tokens[i].is_op("(")) else { return };
    let mut i = open + 1;
    // Parameter list at depth 1 relative to `open`.
    while i < tokens.len() && !tokens[i].is_op(")") {
        let t = &tokens[i];
        if t.is_op(":") {
            let end = scan_to(tokens, i + 1, |t| t.is_op(",") || t.is_op("="));
            mark(remove, i, end);
            i = end;
        } else if t.is_op("=") {
            i = scan_to(tokens, i + 1, |t| t.is_op(","));
        } else if is_logical_end(t) {
            return;
        } else {
            i += 1;
        }
    }
    let arrow = i + 1;
    if arrow < tokens.len() && tokens[arrow].is_op("->") {
        let end = scan_to(tokens, arrow + 1, |t| t.is_op(":"));
        mark(remove, arrow, end);
    }
}

/// Handles a statement starting at `start` if it is an annotated
/// assignment; returns true when it was a bare declaration.
fn strip_variable_annotation(tokens: &[Token], start: usize, remove: &mut [bool]) -> bool {
    let t = &tokens[start];
    if t.kind != TokenKind::Identifier {
        return false;
    }
    let colon = scan_to(tokens, start, |t| t.is_op(":") || is_assign_op(t));
    if colon >= tokens.len() || !tokens[colon].is_op(":") {
        return false;
    }
    let end = scan_to(tokens, colon + 1, |t| t.is_op("="));
    if end < tokens.len() && tokens[end].is_op("=") {
        mark(remove, colon, end);
        false
    } else {
        mark(remove, start + 1, end);
        true
    }
}

pub fn strip_annotations(source: &str) -> Result<Stripped, SourceError> {
    let tokens = tokenize(source)?;
    let mut remove = vec![false; tokens.len()];
    let mut replace_with_pass = Vec::new();
    let mut at_line_start = true;
    let mut depth = 0usize;
    for i in 0..tokens.len() {
        let t = &tokens[i];
        if t.is_keyword("def") {
            strip_header(&tokens, i, &mut remove);
        }
        if at_line_start && depth == 0 && !is_logical_end(t) && !remove[i] && strip_variable_annotation(&tokens, i, &mut remove) {
            replace_with_pass.push(i);
        }
        if opens(t) {
            depth += 1;
        } else if closes(t) {
            depth = depth.saturating_sub(1);
        }
        at_line_start = depth == 0 && (is_logical_end(t) || (t.is_op(":") && !remove[i]));
    }
    let mut out = String::with_capacity(source.len());
    let mut origin = Vec::with_capacity(tokens.len());
    for (i, t) in tokens.iter().enumerate() {
        if remove[i] {
            if t.leading.contains('\n') || t.leading.contains('#') {
                out.push_str(&t.leading);
            }
            continue;
        }
        out.push_str(&t.leading);
        out.push_str(if replace_with_pass.contains(&i) { "pass" } else { &t.text });
        origin.push(i);
    }
    Ok(Stripped { source: out, origin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::parse_source;

    fn strip(src: &str) -> String {
        strip_annotations(src).unwrap().source
    }

    #[test]
    fn parameters_and_returns() {
        assert_eq!(strip("def f(a: int, b: List[int] = [], c=1) -> Dict[str, int]:\n    return a\n"), "def f(a, b = [], c=1):\n    return a\n");
        assert_eq!(strip("def f(a=lambda x: x):\n    pass\n"), "def f(a=lambda x: x):\n    pass\n");
    }

    #[test]
    fn variable_annotations() {
        assert_eq!(strip("def f():\n    x: int = 1\n    y: str\n    d = {1: 2}\n    z = x\n"), "def f():\n    x = 1\n    pass\n    d = {1: 2}\n    z = x\n");
        assert_eq!(strip("def f(c):\n    if c: x: int = 1\n    return c[1:2]\n"), "def f(c):\n    if c: x = 1\n    return c[1:2]\n");
    }

    #[test]
    fn stub_prefix_and_multiline() {
        let src = "class P:\n    x: int\n    def m(self) -> int: ...\n\ndef f(a: int,\n      b: str) -> None:\n    pass\n";
        let out = strip(src);
        assert_eq!(out, "class P:\n    pass\n    def m(self): ...\n\ndef f(a,\n      b):\n    pass\n");
        assert_eq!(out.lines().count(), src.lines().count());
    }

    #[test]
    fn token_mapping_round_trips() {
        let src = "def f(a: int, b: str) -> int:\n    x: int = a\n    return x + b\n";
        let s = strip_annotations(src).unwrap();
        let original = tokenize(src).unwrap();
        let stripped = tokenize(&s.source).unwrap();
        assert_eq!(stripped.len(), s.origin.len());
        for (i, t) in stripped.iter().enumerate() {
            let o = &original[s.origin[i]];
            assert_eq!((t.text.as_str(), t.span.line), (o.text.as_str(), o.span.line));
        }
        parse_source(&s.source).unwrap();
    }

    #[test]
    fn unannotated_source_is_unchanged() {
        let src = "def f(a, b=2):\n    x = {a: b}\n    y = x[1:2]\n    lambda q: q\n    return x\n";
        assert_eq!(strip(src), src);
    }
}
