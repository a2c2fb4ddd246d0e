//! Lossless tokenizer for the supported Python subset.
//!
//! Every byte of the input ends up either in a token's `text` or in the
//! `leading` trivia of the token that follows it (whitespace, comments,
//! blank lines, line continuations). Concatenating `leading + text` over the
//! whole stream reproduces the source exactly.
//!
//! Indentation is tracked with a stack and materialized as zero-width
//! `Indent` / `Dedent` tokens. Newlines inside brackets are trivia. Blank and
//! comment-only lines still produce a `Newline` token so that their bytes have
//! a home; the parser treats runs of newlines as a single separator.

use serde::{Deserialize, Serialize};

use super::SourceError;

/// Tabs advance the column to the next multiple of this width.
pub const TAB_WIDTH: u32 = 8;

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global",
    "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield",
];

const OPERATORS_3: &[&str] = &["**=", "//=", ">>=", "<<=", "..."];
const OPERATORS_2: &[&str] = &[
    "->", "**", "//", "==", "!=", "<=", ">=", "<<", ">>", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "@=", ":=",
];
const OPERATORS_1: &str = "+-*/%@&|^~<>=()[]{},:.;";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Number,
    String,
    Operator,
    Delimiter,
    Newline,
    Indent,
    Dedent,
}

/// Position of a token: 1-based line, 0-based column (tabs expanded), and
/// index into the token stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub line: u32,
    pub column: u32,
    pub token_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Whitespace, comments and continuation characters preceding `text`.
    pub leading: String,
    /// Byte offset of `text` in the source.
    pub offset: usize,
    pub span: SourceSpan,
}

impl Token {
    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }

    pub fn is_op(&self, text: &str) -> bool {
        matches!(self.kind, TokenKind::Operator | TokenKind::Delimiter) && self.text == text
    }

    pub fn is_keyword(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }
}

/// Rebuilds the source text from a token stream.
pub fn render(tokens: &[Token]) -> String {
    let mut out = String::new();
    for t in tokens {
        out.push_str(&t.leading);
        out.push_str(&t.text);
    }
    out
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, SourceError> {
    Lexer::new(source).run()
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    line_start: usize,
    at_line_start: bool,
    brackets: Vec<(char, u32, u32)>,
    indents: Vec<u32>,
    trivia: String,
    tokens: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            pos: 0,
            line: 1,
            line_start: 0,
            at_line_start: true,
            brackets: Vec::new(),
            indents: vec![0],
            trivia: String::new(),
            tokens: Vec::new(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn column_of(&self, pos: usize) -> u32 {
        visual_width(&self.src[self.line_start..pos])
    }

    fn error(&self, pos: usize, message: impl Into<String>) -> SourceError {
        SourceError::Lex { line: self.line, column: self.column_of(pos), message: message.into() }
    }

    fn push(&mut self, kind: TokenKind, start: usize, end: usize) {
        let span = SourceSpan {
            line: self.line,
            column: self.column_of(start),
            token_index: self.tokens.len(),
        };
        let text = self.src[start..end].to_string();
        let leading = std::mem::take(&mut self.trivia);
        self.tokens.push(Token { kind, text, leading, offset: start, span });
    }

    fn push_synthetic(&mut self, kind: TokenKind) {
        let span = SourceSpan {
            line: self.line,
            column: self.column_of(self.pos),
            token_index: self.tokens.len(),
        };
        self.tokens.push(Token {
            kind,
            text: String::new(),
            leading: String::new(),
            offset: self.pos,
            span,
        });
    }

    /// Length of a line break at the cursor, if any.
    fn newline_len(&self) -> Option<usize> {
        let r = self.rest();
        if r.starts_with("\r\n") {
            Some(2)
        } else if r.starts_with('\n') || r.starts_with('\r') {
            Some(1)
        } else {
            None
        }
    }

    fn advance_line(&mut self, after: usize) {
        self.line += 1;
        self.line_start = after;
    }

    fn take_trivia(&mut self, end: usize) {
        self.trivia.push_str(&self.src[self.pos..end]);
        self.pos = end;
    }

    fn skip_inline_space(&mut self) {
        let end = self.pos
            + self
                .rest()
                .bytes()
                .take_while(|b| matches!(b, b' ' | b'\t' | 0x0c))
                .count();
        self.take_trivia(end);
    }

    fn skip_comment(&mut self) {
        if self.peek() == Some('#') {
            let len = self.rest().find(['\n', '\r']).unwrap_or(self.rest().len());
            self.take_trivia(self.pos + len);
        }
    }

    fn run(mut self) -> Result<Vec<Token>, SourceError> {
        loop {
            if self.at_line_start && self.brackets.is_empty() {
                if !self.start_line()? {
                    break;
                }
                continue;
            }
            self.skip_inline_space();
            self.skip_comment();
            if self.peek() == Some('\\') {
                let after = self.pos + 1;
                let nl = self.src[after..]
                    .strip_prefix("\r\n")
                    .map(|_| 2)
                    .or_else(|| self.src[after..].starts_with(['\n', '\r']).then_some(1));
                match nl {
                    Some(n) => {
                        self.take_trivia(after + n);
                        self.advance_line(self.pos);
                        continue;
                    }
                    None => return Err(self.error(self.pos, "unexpected character after line continuation")),
                }
            }
            if let Some(n) = self.newline_len() {
                let start = self.pos;
                if self.brackets.is_empty() {
                    self.push(TokenKind::Newline, start, start + n);
                    self.at_line_start = true;
                } else {
                    self.trivia.push_str(&self.src[start..start + n]);
                }
                self.pos = start + n;
                self.advance_line(self.pos);
                continue;
            }
            let Some(c) = self.peek() else { break };
            self.lex_token(c)?;
        }
        self.finish()
    }

    /// Handles indentation at the start of a logical line. Returns false at EOF.
    fn start_line(&mut self) -> Result<bool, SourceError> {
        let ws_start = self.pos;
        let ws_len = self.rest().bytes().take_while(|b| matches!(b, b' ' | b'\t' | 0x0c)).count();
        let width = visual_width(&self.src[ws_start..ws_start + ws_len]);
        self.take_trivia(ws_start + ws_len);
        self.skip_comment();
        if let Some(n) = self.newline_len() {
            // Blank or comment-only line.
            let start = self.pos;
            self.push(TokenKind::Newline, start, start + n);
            self.pos = start + n;
            self.advance_line(self.pos);
            return Ok(true);
        }
        if self.pos >= self.src.len() {
            return Ok(false);
        }
        let top = *self.indents.last().unwrap_or(&0);
        if width > top {
            self.indents.push(width);
            self.push_synthetic_before_trivia(TokenKind::Indent);
        } else if width < top {
            while width < *self.indents.last().unwrap_or(&0) {
                self.indents.pop();
                self.push_synthetic_before_trivia(TokenKind::Dedent);
            }
            if width != *self.indents.last().unwrap_or(&0) {
                return Err(self.error(self.pos, "unindent does not match any outer indentation level"));
            }
        }
        self.at_line_start = false;
        Ok(true)
    }

    /// Indent/dedent tokens are zero-width and sit right before the first
    /// token of the line; pending trivia stays with that real token.
    fn push_synthetic_before_trivia(&mut self, kind: TokenKind) {
        let trivia = std::mem::take(&mut self.trivia);
        self.push_synthetic(kind);
        self.trivia = trivia;
    }

    fn finish(mut self) -> Result<Vec<Token>, SourceError> {
        if let Some(&(open, line, column)) = self.brackets.last() {
            return Err(SourceError::Lex { line, column, message: format!("'{open}' was never closed") });
        }
        let needs_newline = self
            .tokens
            .last()
            .map(|t| t.kind != TokenKind::Newline)
            .unwrap_or(false);
        if needs_newline || !self.trivia.is_empty() {
            let end = self.src.len();
            self.push(TokenKind::Newline, end, end);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push_synthetic(TokenKind::Dedent);
        }
        Ok(self.tokens)
    }

    fn lex_token(&mut self, c: char) -> Result<(), SourceError> {
        let start = self.pos;
        if let Some(quote_at) = self.string_prefix_len() {
            return self.lex_string(start, quote_at);
        }
        if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
            let end = start + number_len(self.rest());
            self.push(TokenKind::Number, start, end);
            self.pos = end;
            return Ok(());
        }
        if c == '_' || c.is_alphabetic() {
            let len: usize = self
                .rest()
                .chars()
                .take_while(|&ch| ch == '_' || ch.is_alphanumeric())
                .map(char::len_utf8)
                .sum();
            let end = start + len;
            let word = &self.src[start..end];
            let kind = if KEYWORDS.contains(&word) { TokenKind::Keyword } else { TokenKind::Identifier };
            self.push(kind, start, end);
            self.pos = end;
            return Ok(());
        }
        let rest = self.rest();
        let op = OPERATORS_3
            .iter()
            .chain(OPERATORS_2.iter())
            .find(|op| rest.starts_with(**op))
            .map(|op| op.len())
            .or_else(|| OPERATORS_1.contains(c).then_some(1));
        let Some(len) = op else {
            return Err(self.error(start, format!("unexpected character {c:?}")));
        };
        let text = &self.src[start..start + len];
        let kind = match text {
            "(" | ")" | "[" | "]" | "{" | "}" | "," | ":" | "." | ";" | "..." => TokenKind::Delimiter,
            _ => TokenKind::Operator,
        };
        match text {
            "(" | "[" | "{" => {
                let col = self.column_of(start);
                self.brackets.push((c, self.line, col));
            }
            ")" | "]" | "}" => {
                let expected = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                match self.brackets.pop() {
                    Some((open, _, _)) if open == expected => {}
                    _ => return Err(self.error(start, format!("unmatched '{c}'"))),
                }
            }
            _ => {}
        }
        self.push(kind, start, start + len);
        self.pos = start + len;
        Ok(())
    }

    /// If the cursor sits on a string literal (with optional prefix), returns
    /// the byte length of the prefix.
    fn string_prefix_len(&self) -> Option<usize> {
        let bytes = self.rest().as_bytes();
        let mut i = 0;
        while i < 2 && i < bytes.len() && matches!(bytes[i].to_ascii_lowercase(), b'r' | b'b' | b'u' | b'f') {
            i += 1;
        }
        match bytes.get(i) {
            Some(b'\'') | Some(b'"') => {
                let prefix = self.rest()[..i].to_ascii_lowercase();
                let valid = matches!(
                    prefix.as_str(),
                    "" | "r" | "b" | "u" | "f" | "rb" | "br" | "fr" | "rf"
                );
                valid.then_some(i)
            }
            _ => None,
        }
    }

    fn lex_string(&mut self, start: usize, prefix_len: usize) -> Result<(), SourceError> {
        let body_start = start + prefix_len;
        let rest = &self.src[body_start..];
        let quote = &rest[..1];
        let triple = rest.starts_with(&quote.repeat(3));
        let delim = if triple { quote.repeat(3) } else { quote.to_string() };
        let mut i = body_start + delim.len();
        let bytes = self.src.as_bytes();
        let (start_line, start_line_start) = (self.line, self.line_start);
        let mut line = self.line;
        let mut line_start = self.line_start;
        loop {
            if i >= bytes.len() {
                self.line = start_line;
                self.line_start = start_line_start;
                return Err(self.error(start, "unterminated string literal"));
            }
            if self.src[i..].starts_with(delim.as_str()) {
                i += delim.len();
                break;
            }
            match bytes[i] {
                b'\\' => {
                    // Escapes (and raw-string backslashes) protect the next char.
                    i += 1;
                    if i < bytes.len() {
                        if bytes[i] == b'\r' && bytes.get(i + 1) == Some(&b'\n') {
                            i += 2;
                            line += 1;
                            line_start = i;
                        } else if bytes[i] == b'\n' || bytes[i] == b'\r' {
                            i += 1;
                            line += 1;
                            line_start = i;
                        } else {
                            i += self.src[i..].chars().next().map(char::len_utf8).unwrap_or(1);
                        }
                    }
                }
                b'\n' | b'\r' => {
                    if !triple {
                        self.line = start_line;
                        self.line_start = start_line_start;
                        return Err(self.error(start, "unterminated string literal"));
                    }
                    if bytes[i] == b'\r' && bytes.get(i + 1) == Some(&b'\n') {
                        i += 1;
                    }
                    i += 1;
                    line += 1;
                    line_start = i;
                }
                _ => i += self.src[i..].chars().next().map(char::len_utf8).unwrap_or(1),
            }
        }
        self.push(TokenKind::String, start, i);
        self.pos = i;
        self.line = line;
        self.line_start = line_start;
        Ok(())
    }
}

fn number_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    let radix_prefix = b.len() > 1
        && b[0] == b'0'
        && matches!(b[1].to_ascii_lowercase(), b'x' | b'o' | b'b');
    if radix_prefix {
        i = 2;
        while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
            i += 1;
        }
        return i;
    }
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
            i += 1;
        }
    }
    if i < b.len() && matches!(b[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < b.len() && matches!(b[j], b'+' | b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            i = j;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                i += 1;
            }
        }
    }
    if i < b.len() && matches!(b[i], b'j' | b'J' | b'l' | b'L') {
        i += 1;
    }
    i
}

/// Display width of a line prefix with tabs expanded.
pub fn visual_width(s: &str) -> u32 {
    let mut col = 0;
    for ch in s.chars() {
        if ch == '\t' {
            col = (col / TAB_WIDTH + 1) * TAB_WIDTH;
        } else {
            col += 1;
        }
    }
    col
}
