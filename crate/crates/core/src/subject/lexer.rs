//! Tokenizer for the supported Python subset.
//!
//! Produces a flat token stream with synthetic `Newline`, `Indent` and
//! `Dedent` tokens, following the layout rules of the reference tokenizer:
//! newlines inside brackets are ignored, backslash continuations join lines,
//! and blank or comment-only lines never affect indentation.

use super::SubjectError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Name,
    Number,
    Str,
    Op,
    Newline,
    Indent,
    Dedent,
    EndMarker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
    /// Last physical line the token touches (differs from `line` for
    /// triple-quoted strings).
    pub end_line: u32,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Op && self.text == op
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Name && self.text == kw
    }
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==", "!=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

pub struct Lexer<'a> {
    file: &'a str,
    chars: Vec<char>,
    pos: usize,
    line: u32,
    line_start: usize,
    depth: usize,
    indents: Vec<u32>,
    at_line_start: bool,
    tokens: Vec<Token>,
}

pub fn tokenize(file: &str, text: &str) -> Result<Vec<Token>, SubjectError> {
    Lexer::new(file, text).run()
}

/// First line of every statement at indentation level zero, or `None` when
/// the text does not tokenize.
pub fn top_level_starts(text: &str) -> Option<Vec<u32>> {
    let tokens = tokenize("<text>", text).ok()?;
    let mut depth = 0usize;
    let mut at_start = true;
    let mut out = Vec::new();
    for t in &tokens {
        match t.kind {
            TokenKind::Indent => depth += 1,
            TokenKind::Dedent => depth = depth.saturating_sub(1),
            TokenKind::Newline => at_start = true,
            TokenKind::EndMarker => {}
            _ => {
                if at_start && depth == 0 {
                    out.push(t.line);
                }
                at_start = false;
            }
        }
    }
    Some(out)
}

impl<'a> Lexer<'a> {
    fn new(file: &'a str, text: &str) -> Self {
        Self {
            file,
            chars: text.chars().collect(),
            pos: 0,
            line: 1,
            line_start: 0,
            depth: 0,
            indents: vec![0],
            at_line_start: true,
            tokens: Vec::new(),
        }
    }

    fn err(&self, message: impl Into<String>) -> SubjectError {
        SubjectError::Syntax { file: self.file.to_string(), line: self.line, message: message.into() }
    }

    fn peek(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn col(&self) -> u32 {
        (self.pos - self.line_start) as u32
    }

    fn push(&mut self, kind: TokenKind, text: String, line: u32, col: u32) {
        let end_line = self.line;
        self.tokens.push(Token { kind, text, line, col, end_line });
    }

    fn newline_char(&mut self) {
        self.pos += 1;
        self.line += 1;
        self.line_start = self.pos;
    }

    fn run(mut self) -> Result<Vec<Token>, SubjectError> {
        loop {
            if self.at_line_start && self.depth == 0 && !self.handle_indentation()? {
                break;
            }
            let Some(c) = self.peek(0) else { break };
            match c {
                ' ' | '\t' | '\x0c' => self.pos += 1,
                '\r' => self.pos += 1,
                '\n' => {
                    if self.depth == 0 {
                        let (line, col) = (self.line, self.col());
                        self.push(TokenKind::Newline, String::new(), line, col);
                        self.at_line_start = true;
                    }
                    self.newline_char();
                }
                '#' => {
                    while let Some(c) = self.peek(0) {
                        if c == '\n' {
                            break;
                        }
                        self.pos += 1;
                    }
                }
                '\\' => {
                    let mut off = 1;
                    if self.peek(off) == Some('\r') {
                        off += 1;
                    }
                    if self.peek(off) == Some('\n') {
                        self.pos += off;
                        self.newline_char();
                    } else {
                        return Err(self.err("unexpected character after line continuation"));
                    }
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) => {
                    self.number();
                }
                c if c == '_' || c.is_alphabetic() => {
                    if !self.string_with_prefix()? {
                        self.name();
                    }
                }
                '"' | '\'' => self.string(0)?,
                _ => self.operator()?,
            }
        }
        if self.depth > 0 {
            return Err(self.err("unexpected end of file inside brackets"));
        }
        let (line, col) = (self.line, self.col());
        if self.tokens.last().is_some_and(|t| !matches!(t.kind, TokenKind::Newline | TokenKind::Dedent)) {
            self.push(TokenKind::Newline, String::new(), line, col);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokenKind::Dedent, String::new(), line, 0);
        }
        self.push(TokenKind::EndMarker, String::new(), line, 0);
        Ok(self.tokens)
    }

    /// Measures indentation at the start of a logical line. Returns false at EOF.
    fn handle_indentation(&mut self) -> Result<bool, SubjectError> {
        loop {
            let mut width = 0u32;
            let mut p = self.pos;
            while let Some(&c) = self.chars.get(p) {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' => width = 0,
                    _ => break,
                }
                p += 1;
            }
            match self.chars.get(p) {
                None => {
                    self.pos = p;
                    return Ok(false);
                }
                Some('\n') => {
                    self.pos = p;
                    self.newline_char();
                    continue;
                }
                Some('\r') if self.chars.get(p + 1) == Some(&'\n') => {
                    self.pos = p + 1;
                    self.newline_char();
                    continue;
                }
                Some('#') => {
                    while let Some(&c) = self.chars.get(p) {
                        if c == '\n' {
                            break;
                        }
                        p += 1;
                    }
                    self.pos = p;
                    if self.pos >= self.chars.len() {
                        return Ok(false);
                    }
                    self.newline_char();
                    continue;
                }
                Some(_) => {
                    self.pos = p;
                    self.at_line_start = false;
                    let current = *self.indents.last().unwrap_or(&0);
                    if width > current {
                        self.indents.push(width);
                        let line = self.line;
                        self.push(TokenKind::Indent, String::new(), line, width);
                    } else {
                        while width < *self.indents.last().unwrap_or(&0) {
                            self.indents.pop();
                            let line = self.line;
                            self.push(TokenKind::Dedent, String::new(), line, width);
                        }
                        if width != *self.indents.last().unwrap_or(&0) {
                            return Err(self.err("unindent does not match any outer indentation level"));
                        }
                    }
                    return Ok(true);
                }
            }
        }
    }

    fn number(&mut self) {
        let (line, col) = (self.line, self.col());
        let start = self.pos;
        while let Some(c) = self.peek(0) {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                let exp = matches!(c, 'e' | 'E')
                    && !self.chars[start..self.pos].iter().any(|d| matches!(d, 'x' | 'X'));
                self.pos += 1;
                if exp && matches!(self.peek(0), Some('+' | '-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.push(TokenKind::Number, text, line, col);
    }

    fn name(&mut self) {
        let (line, col) = (self.line, self.col());
        let start = self.pos;
        while let Some(c) = self.peek(0) {
            if c == '_' || c.is_alphanumeric() {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.push(TokenKind::Name, text, line, col);
    }

    fn string_with_prefix(&mut self) -> Result<bool, SubjectError> {
        let mut len = 0;
        while len < 2 && self.peek(len).is_some_and(|c| "rRbBuUfF".contains(c)) {
            len += 1;
        }
        if len > 0 && matches!(self.peek(len), Some('"' | '\'')) {
            self.string(len)?;
            return Ok(true);
        }
        Ok(false)
    }

    fn string(&mut self, prefix_len: usize) -> Result<(), SubjectError> {
        let (line, col) = (self.line, self.col());
        let start = self.pos;
        self.pos += prefix_len;
        let quote = self.peek(0).unwrap_or('"');
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        loop {
            let Some(c) = self.peek(0) else {
                return Err(SubjectError::Syntax {
                    file: self.file.to_string(),
                    line,
                    message: "unterminated string literal".into(),
                });
            };
            if c == '\\' {
                self.pos += 1;
                if self.peek(0) == Some('\n') {
                    self.newline_char();
                } else {
                    self.pos += 1;
                }
                continue;
            }
            if c == '\n' {
                if !triple {
                    return Err(SubjectError::Syntax {
                        file: self.file.to_string(),
                        line,
                        message: "unterminated string literal".into(),
                    });
                }
                self.newline_char();
                continue;
            }
            if c == quote {
                if !triple {
                    self.pos += 1;
                    break;
                }
                if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                    self.pos += 3;
                    break;
                }
            }
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.tokens.push(Token { kind: TokenKind::Str, text, line, col, end_line: self.line });
        Ok(())
    }

    fn operator(&mut self) -> Result<(), SubjectError> {
        let (line, col) = (self.line, self.col());
        for op in OPERATORS {
            let n = op.chars().count();
            if self.pos + n <= self.chars.len() && self.chars[self.pos..self.pos + n].iter().copied().eq(op.chars()) {
                match *op {
                    "(" | "[" | "{" => self.depth += 1,
                    ")" | "]" | "}" => {
                        if self.depth == 0 {
                            return Err(self.err(format!("unmatched '{op}'")));
                        }
                        self.depth -= 1;
                    }
                    _ => {}
                }
                self.pos += n;
                self.push(TokenKind::Op, op.to_string(), line, col);
                return Ok(());
            }
        }
        let c = self.peek(0).unwrap_or(' ');
        Err(self.err(format!("invalid character '{c}'")))
    }
}
