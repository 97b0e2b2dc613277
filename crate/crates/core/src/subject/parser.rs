//! Recursive-descent parser for the supported Python subset.
//!
//! Unsupported constructs (`try`, `with`, `match`, `async`, loop `else`
//! clauses, single-line compound bodies, `;`-separated statements) are
//! rejected with [`SubjectError::Unsupported`] rather than mis-parsed, since
//! every downstream analysis works at one-statement-per-line granularity.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::SubjectError;

const AUG_OPS: &[&str] = &["+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^=", "@="];

const NON_EXPR_KEYWORDS: &[&str] = &[
    "and", "as", "assert", "async", "break", "class", "continue", "def", "del", "elif", "else", "except",
    "finally", "for", "from", "global", "if", "import", "in", "is", "nonlocal", "or", "pass", "raise",
    "return", "try", "while", "with", "yield",
];

pub fn parse_module(file: &str, text: &str) -> Result<Vec<Stmt>, SubjectError> {
    let toks = tokenize(file, text)?;
    let mut p = Parser { file, toks, pos: 0 };
    let mut body = Vec::new();
    while !p.at_kind(TokenKind::EndMarker) {
        if p.at_kind(TokenKind::Newline) {
            p.pos += 1;
            continue;
        }
        if p.at_kind(TokenKind::Indent) {
            return Err(p.syntax("unexpected indent"));
        }
        body.push(p.statement()?);
    }
    Ok(body)
}

/// Parses a standalone expression (used for f-string replacement fields).
pub fn parse_expression(file: &str, text: &str) -> Result<Expr, SubjectError> {
    let toks = tokenize(file, text.trim())?;
    let mut p = Parser { file, toks, pos: 0 };
    let e = p.testlist_star_expr()?;
    if !p.at_kind(TokenKind::Newline) && !p.at_kind(TokenKind::EndMarker) {
        return Err(p.syntax("trailing tokens after expression"));
    }
    Ok(e)
}

struct Parser<'a> {
    file: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SubjectError>;

impl<'a> Parser<'a> {
    fn cur(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek_at(&self, n: usize) -> &Token {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    fn prev(&self) -> &Token {
        &self.toks[self.pos.saturating_sub(1)]
    }

    fn advance(&mut self) -> Token {
        let t = self.cur().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_kind(&self, kind: TokenKind) -> bool {
        self.cur().kind == kind
    }

    fn at_op(&self, op: &str) -> bool {
        self.cur().is_op(op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.cur().is_keyword(kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn syntax(&self, message: impl Into<String>) -> SubjectError {
        SubjectError::Syntax { file: self.file.to_string(), line: self.cur().line, message: message.into() }
    }

    fn unsupported(&self, line: u32, construct: &str) -> SubjectError {
        SubjectError::Unsupported { file: self.file.to_string(), line, construct: construct.to_string() }
    }

    fn expect_op(&mut self, op: &str) -> PResult<Token> {
        if self.at_op(op) {
            Ok(self.advance())
        } else {
            Err(self.syntax(format!("expected '{op}', found '{}'", self.describe())))
        }
    }

    fn expect_name(&mut self) -> PResult<String> {
        if self.at_kind(TokenKind::Name) && !NON_EXPR_KEYWORDS.contains(&self.cur().text.as_str()) {
            Ok(self.advance().text)
        } else {
            Err(self.syntax(format!("expected identifier, found '{}'", self.describe())))
        }
    }

    fn describe(&self) -> String {
        match self.cur().kind {
            TokenKind::Newline => "newline".into(),
            TokenKind::Indent => "indent".into(),
            TokenKind::Dedent => "dedent".into(),
            TokenKind::EndMarker => "end of file".into(),
            _ => self.cur().text.clone(),
        }
    }

    // ---------------------------------------------------------------- statements

    fn statement(&mut self) -> PResult<Stmt> {
        let first = self.cur().clone();
        let indent = first.col;
        if first.is_op("@") {
            let mut decorators = Vec::new();
            while self.eat_op("@") {
                decorators.push(self.namedexpr_test()?);
                self.end_of_simple_line()?;
            }
            if self.at_kw("def") {
                return self.funcdef(first.line, indent, decorators);
            }
            if self.at_kw("class") {
                return self.classdef(first.line, indent, decorators);
            }
            if self.at_kw("async") {
                return Err(self.unsupported(self.cur().line, "async"));
            }
            return Err(self.syntax("decorator must precede a function or class definition"));
        }
        if first.kind == TokenKind::Name {
            match first.text.as_str() {
                "if" => return self.if_stmt(false),
                "while" => return self.while_stmt(),
                "for" => return self.for_stmt(),
                "def" => return self.funcdef(first.line, indent, Vec::new()),
                "class" => return self.classdef(first.line, indent, Vec::new()),
                "try" => return Err(self.unsupported(first.line, "try")),
                "with" => return Err(self.unsupported(first.line, "with")),
                "async" => return Err(self.unsupported(first.line, "async")),
                "elif" | "else" | "except" | "finally" => {
                    return Err(self.syntax(format!("unexpected '{}'", first.text)));
                }
                "match" | "case" if self.looks_like_soft_keyword_block() => {
                    return Err(self.unsupported(first.line, "match"));
                }
                _ => {}
            }
        }
        let kind = self.simple_statement()?;
        let header_end = self.prev().end_line;
        self.end_of_simple_line()?;
        Ok(Stmt { line: first.line, start_line: first.line, header_end, end_line: header_end, indent, kind })
    }

    fn looks_like_soft_keyword_block(&self) -> bool {
        let next = self.peek_at(1);
        if next.kind == TokenKind::Op && !matches!(next.text.as_str(), "(" | "[" | "{" | "-" | "*" | "~") {
            return false;
        }
        if matches!(next.kind, TokenKind::Newline | TokenKind::EndMarker) {
            return false;
        }
        let mut i = self.pos;
        let mut depth = 0i32;
        while i < self.toks.len() {
            let t = &self.toks[i];
            match t.kind {
                TokenKind::Newline | TokenKind::EndMarker => break,
                TokenKind::Op if matches!(t.text.as_str(), "(" | "[" | "{") => depth += 1,
                TokenKind::Op if matches!(t.text.as_str(), ")" | "]" | "}") => depth -= 1,
                TokenKind::Op if t.text == "=" && depth == 0 => return false,
                _ => {}
            }
            i += 1;
        }
        i > 0 && self.toks[i - 1].is_op(":")
    }

    fn end_of_simple_line(&mut self) -> PResult<()> {
        if self.at_op(";") {
            return Err(self.unsupported(self.cur().line, "multiple statements on one line"));
        }
        if self.at_kind(TokenKind::Newline) {
            self.pos += 1;
            Ok(())
        } else if self.at_kind(TokenKind::EndMarker) {
            Ok(())
        } else {
            Err(self.syntax(format!("unexpected '{}'", self.describe())))
        }
    }

    fn simple_statement(&mut self) -> PResult<StmtKind> {
        let t = self.cur().clone();
        if t.kind == TokenKind::Name {
            match t.text.as_str() {
                "pass" => {
                    self.pos += 1;
                    return Ok(StmtKind::Pass);
                }
                "break" => {
                    self.pos += 1;
                    return Ok(StmtKind::Break);
                }
                "continue" => {
                    self.pos += 1;
                    return Ok(StmtKind::Continue);
                }
                "return" => {
                    self.pos += 1;
                    let value = if self.starts_expr() { Some(self.testlist_star_expr()?) } else { None };
                    return Ok(StmtKind::Return(value));
                }
                "raise" => {
                    self.pos += 1;
                    let exc = if self.starts_expr() { Some(self.test()?) } else { None };
                    let cause = if self.eat_kw("from") { Some(self.test()?) } else { None };
                    return Ok(StmtKind::Raise(exc, cause));
                }
                "assert" => {
                    self.pos += 1;
                    let test = self.test()?;
                    let msg = if self.eat_op(",") { Some(self.test()?) } else { None };
                    return Ok(StmtKind::Assert(test, msg));
                }
                "del" => {
                    self.pos += 1;
                    let mut targets = vec![self.or_expr_or_star()?];
                    while self.eat_op(",") {
                        if !self.starts_expr() {
                            break;
                        }
                        targets.push(self.or_expr_or_star()?);
                    }
                    return Ok(StmtKind::Del(targets));
                }
                "global" | "nonlocal" => {
                    self.pos += 1;
                    let mut names = vec![self.expect_name()?];
                    while self.eat_op(",") {
                        names.push(self.expect_name()?);
                    }
                    return Ok(if t.text == "global" { StmtKind::Global(names) } else { StmtKind::Nonlocal(names) });
                }
                "import" => {
                    self.pos += 1;
                    return self.import_names();
                }
                "from" => {
                    self.pos += 1;
                    return self.import_from();
                }
                _ => {}
            }
        }

        let first = if self.at_kw("yield") { self.yield_expr()? } else { self.testlist_star_expr()? };
        if self.at_op(":") {
            self.pos += 1;
            let annotation = self.test()?;
            let value = if self.eat_op("=") { Some(self.assign_value()?) } else { None };
            return Ok(StmtKind::AnnAssign { target: first, annotation, value });
        }
        if self.cur().kind == TokenKind::Op && AUG_OPS.contains(&self.cur().text.as_str()) {
            let op = self.advance().text;
            let value = self.assign_value()?;
            return Ok(StmtKind::AugAssign { target: first, op, value });
        }
        if self.at_op("=") {
            let mut chain = vec![first];
            while self.eat_op("=") {
                chain.push(self.assign_value()?);
            }
            let value = chain.pop().expect("chain has at least two elements");
            return Ok(StmtKind::Assign { targets: chain, value });
        }
        Ok(StmtKind::Expr(first))
    }

    fn assign_value(&mut self) -> PResult<Expr> {
        if self.at_kw("yield") {
            self.yield_expr()
        } else {
            self.testlist_star_expr()
        }
    }

    fn dotted_name(&mut self) -> PResult<String> {
        let mut name = self.expect_name()?;
        while self.eat_op(".") {
            name.push('.');
            name.push_str(&self.expect_name()?);
        }
        Ok(name)
    }

    fn import_names(&mut self) -> PResult<StmtKind> {
        let mut bound = Vec::new();
        loop {
            let dotted = self.dotted_name()?;
            if self.eat_kw("as") {
                bound.push(self.expect_name()?);
            } else {
                bound.push(dotted.split('.').next().unwrap_or_default().to_string());
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(StmtKind::Import(bound))
    }

    fn import_from(&mut self) -> PResult<StmtKind> {
        while self.eat_op(".") || self.eat_op("...") {}
        if !self.at_kw("import") {
            self.dotted_name()?;
        }
        if !self.eat_kw("import") {
            return Err(self.syntax("expected 'import'"));
        }
        if self.eat_op("*") {
            return Ok(StmtKind::Import(Vec::new()));
        }
        let paren = self.eat_op("(");
        let mut bound = Vec::new();
        loop {
            if paren && self.at_op(")") {
                break;
            }
            let name = self.expect_name()?;
            if self.eat_kw("as") {
                bound.push(self.expect_name()?);
            } else {
                bound.push(name);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        if paren {
            self.expect_op(")")?;
        }
        Ok(StmtKind::Import(bound))
    }

    /// Parses `: NEWLINE INDENT stmt+ DEDENT` after a compound header.
    /// Returns the colon line and the body.
    fn block(&mut self, header_line: u32) -> PResult<(u32, Vec<Stmt>)> {
        let colon = self.expect_op(":")?;
        if !self.at_kind(TokenKind::Newline) {
            return Err(self.unsupported(header_line, "single-line compound statement"));
        }
        self.pos += 1;
        if !self.at_kind(TokenKind::Indent) {
            return Err(self.syntax("expected an indented block"));
        }
        self.pos += 1;
        let mut body = Vec::new();
        while !self.at_kind(TokenKind::Dedent) && !self.at_kind(TokenKind::EndMarker) {
            if self.at_kind(TokenKind::Newline) {
                self.pos += 1;
                continue;
            }
            body.push(self.statement()?);
        }
        if self.at_kind(TokenKind::Dedent) {
            self.pos += 1;
        }
        Ok((colon.line, body))
    }

    fn body_end(body: &[Stmt], fallback: u32) -> u32 {
        body.last().map_or(fallback, |s| s.end_line)
    }

    fn if_stmt(&mut self, is_elif: bool) -> PResult<Stmt> {
        let kw = self.advance();
        let test = self.namedexpr_test()?;
        let (header_end, body) = self.block(kw.line)?;
        let mut end_line = Self::body_end(&body, header_end);
        let orelse = if self.at_kw("elif") && self.cur().col == kw.col {
            let elif = self.if_stmt(true)?;
            end_line = elif.end_line;
            Some(ElseClause::Elif(Box::new(elif)))
        } else if self.at_kw("else") && self.cur().col == kw.col {
            let else_tok = self.advance();
            let (_, else_body) = self.block(else_tok.line)?;
            end_line = Self::body_end(&else_body, else_tok.line);
            Some(ElseClause::Else { line: else_tok.line, indent: else_tok.col, body: else_body })
        } else {
            None
        };
        Ok(Stmt {
            line: kw.line,
            start_line: kw.line,
            header_end,
            end_line,
            indent: kw.col,
            kind: StmtKind::If { test, body, orelse, is_elif },
        })
    }

    fn reject_loop_else(&self, kw: &Token) -> PResult<()> {
        if self.at_kw("else") && self.cur().col == kw.col {
            return Err(self.unsupported(self.cur().line, "loop else clause"));
        }
        Ok(())
    }

    fn while_stmt(&mut self) -> PResult<Stmt> {
        let kw = self.advance();
        let test = self.namedexpr_test()?;
        let (header_end, body) = self.block(kw.line)?;
        self.reject_loop_else(&kw)?;
        let end_line = Self::body_end(&body, header_end);
        Ok(Stmt { line: kw.line, start_line: kw.line, header_end, end_line, indent: kw.col, kind: StmtKind::While { test, body } })
    }

    fn for_stmt(&mut self) -> PResult<Stmt> {
        let kw = self.advance();
        let target = self.target_list()?;
        if !self.eat_kw("in") {
            return Err(self.syntax("expected 'in' in for statement"));
        }
        let iter = self.testlist_star_expr()?;
        let (header_end, body) = self.block(kw.line)?;
        self.reject_loop_else(&kw)?;
        let end_line = Self::body_end(&body, header_end);
        Ok(Stmt { line: kw.line, start_line: kw.line, header_end, end_line, indent: kw.col, kind: StmtKind::For { target, iter, body } })
    }

    fn funcdef(&mut self, start_line: u32, indent: u32, decorators: Vec<Expr>) -> PResult<Stmt> {
        let kw = self.advance();
        let name = self.expect_name()?;
        self.expect_op("(")?;
        let params = self.params(")", true)?;
        self.expect_op(")")?;
        let returns = if self.eat_op("->") { Some(self.test()?) } else { None };
        let (header_end, body) = self.block(kw.line)?;
        let end_line = Self::body_end(&body, header_end);
        Ok(Stmt {
            line: kw.line,
            start_line,
            header_end,
            end_line,
            indent,
            kind: StmtKind::FunctionDef { name, params, decorators, returns, body },
        })
    }

    fn classdef(&mut self, start_line: u32, indent: u32, decorators: Vec<Expr>) -> PResult<Stmt> {
        let kw = self.advance();
        let name = self.expect_name()?;
        let bases = if self.eat_op("(") {
            let args = self.arglist()?;
            self.expect_op(")")?;
            args
        } else {
            Vec::new()
        };
        let (header_end, body) = self.block(kw.line)?;
        let end_line = Self::body_end(&body, header_end);
        Ok(Stmt { line: kw.line, start_line, header_end, end_line, indent, kind: StmtKind::ClassDef { name, bases, decorators, body } })
    }

    fn params(&mut self, close: &str, annotated: bool) -> PResult<Vec<Param>> {
        let mut params = Vec::new();
        while !self.at_op(close) {
            if self.eat_op("/") {
            } else if self.eat_op("*") || self.eat_op("**") {
                if self.at_kind(TokenKind::Name) {
                    let name = self.expect_name()?;
                    let annotation = if annotated && self.eat_op(":") { Some(self.test()?) } else { None };
                    params.push(Param { name, annotation, default: None });
                }
            } else {
                let name = self.expect_name()?;
                let annotation = if annotated && self.eat_op(":") { Some(self.test()?) } else { None };
                let default = if self.eat_op("=") { Some(self.test()?) } else { None };
                params.push(Param { name, annotation, default });
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(params)
    }

    // --------------------------------------------------------------- expressions

    fn starts_expr(&self) -> bool {
        let t = self.cur();
        match t.kind {
            TokenKind::Name => !NON_EXPR_KEYWORDS.contains(&t.text.as_str()),
            TokenKind::Number | TokenKind::Str => true,
            TokenKind::Op => matches!(t.text.as_str(), "(" | "[" | "{" | "-" | "+" | "~" | "*" | "**" | "..."),
            _ => false,
        }
    }

    fn testlist_star_expr(&mut self) -> PResult<Expr> {
        let first = self.star_or_namedexpr()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if !self.starts_expr() {
                break;
            }
            items.push(self.star_or_namedexpr()?);
        }
        Ok(Expr::Tuple(items))
    }

    fn star_or_namedexpr(&mut self) -> PResult<Expr> {
        if self.eat_op("*") {
            return Ok(Expr::Starred(Box::new(self.or_expr()?)));
        }
        self.namedexpr_test()
    }

    fn or_expr_or_star(&mut self) -> PResult<Expr> {
        if self.eat_op("*") {
            return Ok(Expr::Starred(Box::new(self.or_expr()?)));
        }
        self.or_expr()
    }

    /// Assignment-target list for `for` and comprehension clauses.
    fn target_list(&mut self) -> PResult<Expr> {
        let first = self.or_expr_or_star()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_kw("in") {
                break;
            }
            items.push(self.or_expr_or_star()?);
        }
        Ok(Expr::Tuple(items))
    }

    fn yield_expr(&mut self) -> PResult<Expr> {
        self.advance();
        if self.eat_kw("from") {
            return Ok(Expr::YieldFrom(Box::new(self.test()?)));
        }
        if self.starts_expr() {
            Ok(Expr::Yield(Some(Box::new(self.testlist_star_expr()?))))
        } else {
            Ok(Expr::Yield(None))
        }
    }

    fn namedexpr_test(&mut self) -> PResult<Expr> {
        if self.at_kind(TokenKind::Name) && self.peek_at(1).is_op(":=") {
            let name = self.expect_name()?;
            self.advance();
            let value = self.test()?;
            return Ok(Expr::NamedExpr(name, Box::new(value)));
        }
        self.test()
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.at_kw("lambda") {
            return self.lambda();
        }
        let body = self.or_test()?;
        if self.at_kw("if") {
            self.advance();
            let test = self.or_test()?;
            if !self.eat_kw("else") {
                return Err(self.syntax("expected 'else' in conditional expression"));
            }
            let orelse = self.test()?;
            return Ok(Expr::IfExp { test: Box::new(test), body: Box::new(body), orelse: Box::new(orelse) });
        }
        Ok(body)
    }

    fn test_nocond(&mut self) -> PResult<Expr> {
        if self.at_kw("lambda") {
            return self.lambda();
        }
        self.or_test()
    }

    fn lambda(&mut self) -> PResult<Expr> {
        self.advance();
        let params = self.params(":", false)?;
        self.expect_op(":")?;
        let body = self.test()?;
        Ok(Expr::Lambda { params, body: Box::new(body) })
    }

    fn or_test(&mut self) -> PResult<Expr> {
        let first = self.and_test()?;
        if !self.at_kw("or") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw("or") {
            values.push(self.and_test()?);
        }
        Ok(Expr::BoolOp("or".into(), values))
    }

    fn and_test(&mut self) -> PResult<Expr> {
        let first = self.not_test()?;
        if !self.at_kw("and") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw("and") {
            values.push(self.not_test()?);
        }
        Ok(Expr::BoolOp("and".into(), values))
    }

    fn not_test(&mut self) -> PResult<Expr> {
        if self.eat_kw("not") {
            return Ok(Expr::UnaryOp("not".into(), Box::new(self.not_test()?)));
        }
        self.comparison()
    }

    fn comp_op(&mut self) -> Option<String> {
        let t = self.cur();
        if t.kind == TokenKind::Op && matches!(t.text.as_str(), "<" | ">" | "==" | ">=" | "<=" | "!=") {
            return Some(self.advance().text);
        }
        if t.is_keyword("in") {
            self.advance();
            return Some("in".into());
        }
        if t.is_keyword("not") && self.peek_at(1).is_keyword("in") {
            self.advance();
            self.advance();
            return Some("not in".into());
        }
        if t.is_keyword("is") {
            self.advance();
            if self.eat_kw("not") {
                return Some("is not".into());
            }
            return Some("is".into());
        }
        None
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let left = self.or_expr()?;
        let mut rest = Vec::new();
        while let Some(op) = self.comp_op() {
            rest.push((op, self.or_expr()?));
        }
        if rest.is_empty() {
            Ok(left)
        } else {
            Ok(Expr::Compare(Box::new(left), rest))
        }
    }

    fn binary_level(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        let mut left = next(self)?;
        while self.cur().kind == TokenKind::Op && ops.contains(&self.cur().text.as_str()) {
            let op = self.advance().text;
            let right = next(self)?;
            left = Expr::BinOp(Box::new(left), op, Box::new(right));
        }
        Ok(left)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&["|"], Self::xor_expr)
    }

    fn xor_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&["^"], Self::and_expr)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&["&"], Self::shift_expr)
    }

    fn shift_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&["<<", ">>"], Self::arith_expr)
    }

    fn arith_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Expr> {
        self.binary_level(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let t = self.cur();
        if t.kind == TokenKind::Op && matches!(t.text.as_str(), "+" | "-" | "~") {
            let op = self.advance().text;
            return Ok(Expr::UnaryOp(op, Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = if self.eat_kw("await") {
            Expr::Await(Box::new(self.atom_expr()?))
        } else {
            self.atom_expr()?
        };
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(Expr::BinOp(Box::new(base), "**".into(), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom_expr(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let args = self.arglist()?;
                self.expect_op(")")?;
                e = Expr::Call { func: Box::new(e), args };
            } else if self.eat_op("[") {
                let index = self.subscript_list()?;
                self.expect_op("]")?;
                e = Expr::Subscript(Box::new(e), Box::new(index));
            } else if self.eat_op(".") {
                let name = self.expect_name()?;
                e = Expr::Attribute(Box::new(e), name);
            } else {
                return Ok(e);
            }
        }
    }

    fn arglist(&mut self) -> PResult<Vec<Arg>> {
        let mut args = Vec::new();
        while !self.at_op(")") {
            if self.eat_op("*") {
                args.push(Arg { keyword: None, value: Expr::Starred(Box::new(self.test()?)) });
            } else if self.eat_op("**") {
                args.push(Arg { keyword: None, value: Expr::DoubleStarred(Box::new(self.test()?)) });
            } else if self.at_kind(TokenKind::Name) && self.peek_at(1).is_op("=") {
                let keyword = self.expect_name()?;
                self.advance();
                args.push(Arg { keyword: Some(keyword), value: self.test()? });
            } else {
                let value = self.namedexpr_test()?;
                if self.at_kw("for") || self.at_kw("async") {
                    let generators = self.comp_for()?;
                    args.push(Arg {
                        keyword: None,
                        value: Expr::Comprehension { kind: CompKind::Generator, elt: Box::new(value), value: None, generators },
                    });
                } else {
                    args.push(Arg { keyword: None, value });
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(args)
    }

    fn subscript_list(&mut self) -> PResult<Expr> {
        let first = self.subscript()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("]") {
                break;
            }
            items.push(self.subscript()?);
        }
        Ok(Expr::Tuple(items))
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let lower = if self.at_op(":") { None } else { Some(Box::new(self.star_or_namedexpr()?)) };
        if !self.eat_op(":") {
            return Ok(*lower.expect("lower is parsed when no colon follows"));
        }
        let upper = if self.at_op(":") || self.at_op("]") || self.at_op(",") { None } else { Some(Box::new(self.test()?)) };
        let step = if self.eat_op(":") && !(self.at_op("]") || self.at_op(",")) { Some(Box::new(self.test()?)) } else { None };
        Ok(Expr::Slice(lower, upper, step))
    }

    fn comp_for(&mut self) -> PResult<Vec<Generator>> {
        let mut generators = Vec::new();
        loop {
            if self.at_kw("async") {
                return Err(self.unsupported(self.cur().line, "async comprehension"));
            }
            if !self.eat_kw("for") {
                break;
            }
            let target = self.target_list()?;
            if !self.eat_kw("in") {
                return Err(self.syntax("expected 'in' in comprehension"));
            }
            let iter = self.or_test()?;
            let mut ifs = Vec::new();
            while self.eat_kw("if") {
                ifs.push(self.test_nocond()?);
            }
            generators.push(Generator { target, iter, ifs });
        }
        Ok(generators)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let t = self.cur().clone();
        match t.kind {
            TokenKind::Name => {
                if NON_EXPR_KEYWORDS.contains(&t.text.as_str()) {
                    return Err(self.syntax(format!("unexpected keyword '{}'", t.text)));
                }
                self.advance();
                Ok(match t.text.as_str() {
                    "None" | "True" | "False" => Expr::Constant(t.text),
                    _ => Expr::Name(t.text),
                })
            }
            TokenKind::Number => {
                self.advance();
                Ok(Expr::Constant(t.text))
            }
            TokenKind::Str => self.strings(),
            TokenKind::Op => match t.text.as_str() {
                "..." => {
                    self.advance();
                    Ok(Expr::Constant("...".into()))
                }
                "(" => self.paren(),
                "[" => self.list_display(),
                "{" => self.brace_display(),
                _ => Err(self.syntax(format!("unexpected '{}'", t.text))),
            },
            _ => Err(self.syntax(format!("unexpected '{}'", self.describe()))),
        }
    }

    fn strings(&mut self) -> PResult<Expr> {
        let mut parts = Vec::new();
        let mut fields = Vec::new();
        let mut is_f = false;
        while self.at_kind(TokenKind::Str) {
            let t = self.advance();
            let prefix: String = t.text.chars().take_while(|c| c.is_alphabetic()).collect();
            if prefix.chars().any(|c| matches!(c, 'f' | 'F')) {
                is_f = true;
                fields.extend(fstring_fields(self.file, &t.text[prefix.len()..]));
            }
            parts.push(t.text);
        }
        if is_f {
            Ok(Expr::FString(fields))
        } else {
            Ok(Expr::Constant(parts.join(" ")))
        }
    }

    fn paren(&mut self) -> PResult<Expr> {
        self.advance();
        if self.eat_op(")") {
            return Ok(Expr::Tuple(Vec::new()));
        }
        if self.at_kw("yield") {
            let y = self.yield_expr()?;
            self.expect_op(")")?;
            return Ok(y);
        }
        let first = self.star_or_namedexpr()?;
        if self.at_kw("for") || self.at_kw("async") {
            let generators = self.comp_for()?;
            self.expect_op(")")?;
            return Ok(Expr::Comprehension { kind: CompKind::Generator, elt: Box::new(first), value: None, generators });
        }
        if self.eat_op(")") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op(")") {
                break;
            }
            items.push(self.star_or_namedexpr()?);
        }
        self.expect_op(")")?;
        Ok(Expr::Tuple(items))
    }

    fn list_display(&mut self) -> PResult<Expr> {
        self.advance();
        if self.eat_op("]") {
            return Ok(Expr::List(Vec::new()));
        }
        let first = self.star_or_namedexpr()?;
        if self.at_kw("for") || self.at_kw("async") {
            let generators = self.comp_for()?;
            self.expect_op("]")?;
            return Ok(Expr::Comprehension { kind: CompKind::List, elt: Box::new(first), value: None, generators });
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("]") {
                break;
            }
            items.push(self.star_or_namedexpr()?);
        }
        self.expect_op("]")?;
        Ok(Expr::List(items))
    }

    fn brace_display(&mut self) -> PResult<Expr> {
        self.advance();
        if self.eat_op("}") {
            return Ok(Expr::Dict(Vec::new()));
        }
        if self.eat_op("**") {
            let first = self.or_expr()?;
            return self.dict_rest(None, first);
        }
        let first = self.star_or_namedexpr()?;
        if self.eat_op(":") {
            let value = self.test()?;
            if self.at_kw("for") || self.at_kw("async") {
                let generators = self.comp_for()?;
                self.expect_op("}")?;
                return Ok(Expr::Comprehension {
                    kind: CompKind::Dict,
                    elt: Box::new(first),
                    value: Some(Box::new(value)),
                    generators,
                });
            }
            return self.dict_rest(Some(first), value);
        }
        if self.at_kw("for") || self.at_kw("async") {
            let generators = self.comp_for()?;
            self.expect_op("}")?;
            return Ok(Expr::Comprehension { kind: CompKind::Set, elt: Box::new(first), value: None, generators });
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("}") {
                break;
            }
            items.push(self.star_or_namedexpr()?);
        }
        self.expect_op("}")?;
        Ok(Expr::Set(items))
    }

    fn dict_rest(&mut self, first_key: Option<Expr>, first_value: Expr) -> PResult<Expr> {
        let mut entries = vec![(first_key, first_value)];
        while self.eat_op(",") {
            if self.at_op("}") {
                break;
            }
            if self.eat_op("**") {
                entries.push((None, self.or_expr()?));
            } else {
                let k = self.test()?;
                self.expect_op(":")?;
                entries.push((Some(k), self.test()?));
            }
        }
        self.expect_op("}")?;
        Ok(Expr::Dict(entries))
    }
}

/// Extracts and parses the replacement fields of an f-string body
/// (the text starting at the opening quote). Fields that fail to parse are
/// skipped; they only contribute name references.
fn fstring_fields(file: &str, quoted: &str) -> Vec<Expr> {
    let q = quoted.chars().next().unwrap_or('"');
    let triple = quoted.starts_with(&q.to_string().repeat(3)) && quoted.len() >= 6;
    let strip = if triple { 3 } else { 1 };
    let chars: Vec<char> = quoted.chars().collect();
    if chars.len() < 2 * strip {
        return Vec::new();
    }
    let body = &chars[strip..chars.len() - strip];
    let mut out = Vec::new();
    let mut i = 0;
    while i < body.len() {
        match body[i] {
            '{' if body.get(i + 1) == Some(&'{') => i += 2,
            '{' => {
                let mut depth = 0;
                let mut j = i + 1;
                let mut end_expr = None;
                while j < body.len() {
                    match body[j] {
                        '(' | '[' | '{' => depth += 1,
                        ')' | ']' => depth -= 1,
                        '}' if depth == 0 => break,
                        '}' => depth -= 1,
                        '!' if depth == 0 && body.get(j + 1) != Some(&'=') && end_expr.is_none() => end_expr = Some(j),
                        ':' if depth == 0 && end_expr.is_none() => end_expr = Some(j),
                        _ => {}
                    }
                    j += 1;
                }
                let stop = end_expr.unwrap_or(j);
                let mut text: String = body[i + 1..stop.min(body.len())].iter().collect();
                if text.trim_end().ends_with('=') && !text.trim_end().ends_with("==") {
                    text = text.trim_end().trim_end_matches('=').to_string();
                }
                if let Ok(e) = parse_expression(file, &text) {
                    out.push(e);
                }
                i = j + 1;
            }
            _ => i += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Vec<Stmt> {
        parse_module("t.py", text).unwrap()
    }

    #[test]
    fn if_elif_else_chain_lines() {
        let m = parse("if a:\n    x = 1\nelif b:\n    x = 2\nelse:\n    x = 3\ny = x\n");
        assert_eq!(m.len(), 2);
        let StmtKind::If { orelse: Some(ElseClause::Elif(elif)), .. } = &m[0].kind else { panic!() };
        assert_eq!(elif.line, 3);
        let StmtKind::If { orelse: Some(ElseClause::Else { line, .. }), is_elif, .. } = &elif.kind else { panic!() };
        assert!(*is_elif);
        assert_eq!(*line, 5);
        assert_eq!(m[0].end_line, 6);
        assert_eq!(m[1].line, 7);
    }

    #[test]
    fn multi_line_statement_spans() {
        let m = parse("x = foo(1,\n        2)\nif (a and\n        b):\n    pass\n");
        assert_eq!((m[0].line, m[0].header_end), (1, 2));
        assert_eq!((m[1].line, m[1].header_end, m[1].end_line), (3, 4, 5));
    }

    #[test]
    fn decorated_def_records_start_line() {
        let m = parse("@dec\n@other(1)\ndef f(a, b: int = 2, *args, **kw) -> int:\n    return a\n");
        assert_eq!((m[0].start_line, m[0].line), (1, 3));
        let StmtKind::FunctionDef { params, decorators, .. } = &m[0].kind else { panic!() };
        assert_eq!(params.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), ["a", "b", "args", "kw"]);
        assert_eq!(decorators.len(), 2);
    }

    #[test]
    fn expressions_cover_the_subset() {
        let src = "x = [a for a in b if a % 2 == 0]\n\
                   y = {k: v for k, v in d.items()}\n\
                   z = lambda q, r=1: q + r\n\
                   w = a if b else c\n\
                   v = not a in b and c is not None\n\
                   u = f(*args, key=1, **kw)[1:2, ::3]\n\
                   t = (n := 10) ** -2\n\
                   s = f\"{name!r:>{width}} {x}\"\n\
                   a, *rest = 1, 2, 3\n\
                   freq[x] = freq.get(x, 0) + 1\n";
        let m = parse(src);
        assert_eq!(m.len(), 10);
        assert!(matches!(&m[8].kind, StmtKind::Assign { targets, .. } if matches!(&targets[0], Expr::Tuple(_))));
    }

    #[test]
    fn unsupported_constructs() {
        for (src, construct) in [
            ("try:\n    x = 1\nexcept E:\n    pass\n", "try"),
            ("with f() as g:\n    pass\n", "with"),
            ("x = 1; y = 2\n", "multiple statements on one line"),
            ("if x: y = 1\n", "single-line compound statement"),
            ("for a in b:\n    pass\nelse:\n    pass\n", "loop else clause"),
            ("async def f():\n    pass\n", "async"),
            ("match x:\n    case 1:\n        pass\n", "match"),
        ] {
            match parse_module("t.py", src) {
                Err(SubjectError::Unsupported { construct: c, .. }) => assert_eq!(c, construct, "{src}"),
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    #[test]
    fn match_as_identifier_is_fine() {
        let m = parse("match = re.match(p, s)\nmatch.group(0)\n");
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = parse_module("t.py", "x = 1\ny = (2 +\n").unwrap_err();
        assert!(matches!(err, SubjectError::Syntax { .. }));
        let err = parse_module("t.py", "x = 1\nif x\n    pass\n").unwrap_err();
        assert!(matches!(err, SubjectError::Syntax { line: 2, .. }), "{err:?}");
    }
}
