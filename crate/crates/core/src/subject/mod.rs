//! Subject-program model: parsing, statements, control flow and control
//! dependence for the supported Python subset.

pub mod ast;
mod cdg;
mod cfg;
pub mod lexer;
pub mod names;
pub mod parser;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cdg::{build_cdg, control_conditions, Cdg, Control};
pub use cfg::{build_cfg, Cfg, EdgeKind, Node, Scope, ScopeKind};

use ast::{ElseClause, Expr, Stmt, StmtKind};
use names::{statement_names, Def};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubjectError {
    #[error("{file}:{line}: syntax error: {message}")]
    Syntax { file: String, line: u32, message: String },
    #[error("{file}:{line}: unsupported construct: {construct}")]
    Unsupported { file: String, line: u32, construct: String },
    #[error("{file}:{line}: not an executable line")]
    UnknownLine { file: String, line: u32 },
}

/// A source line within the project, identified by relative path and
/// 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineId {
    pub file: String,
    pub line: u32,
}

impl LineId {
    pub fn new(file: impl Into<String>, line: u32) -> Self {
        assert!(line >= 1, "line numbers are 1-based");
        Self { file: file.into(), line }
    }
}

impl fmt::Display for LineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementKind {
    Assign,
    AugAssign,
    Expr,
    Docstring,
    Return,
    Raise,
    Assert,
    Del,
    Pass,
    Break,
    Continue,
    Global,
    Import,
    If,
    Elif,
    Else,
    While,
    For,
    Def,
    Class,
}

impl StatementKind {
    pub fn is_decision(self) -> bool {
        matches!(self, StatementKind::If | StatementKind::Elif | StatementKind::While | StatementKind::For)
    }

    /// Lines that exist only to make the surrounding block well-formed.
    pub fn is_structural(self) -> bool {
        matches!(self, StatementKind::Def | StatementKind::Class | StatementKind::Else | StatementKind::Docstring)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementInfo {
    pub line: u32,
    /// First physical line (decorators included).
    pub start_line: u32,
    /// Last physical line of the statement (header only, for compounds).
    pub header_end: u32,
    pub indent: u32,
    pub kind: StatementKind,
    pub referenced: Vec<String>,
    pub defs: Vec<Def>,
}

impl StatementInfo {
    pub fn defined(&self) -> impl Iterator<Item = &str> {
        self.defs.iter().map(|d| d.name.as_str())
    }
}

/// A parsed subject file.
#[derive(Debug, Clone)]
pub struct SourceUnit {
    pub file: String,
    pub text: String,
    pub body: Vec<Stmt>,
    /// Every statement line (including structural `def`/`class`/`else`
    /// lines), ascending.
    pub statements: Vec<StatementInfo>,
    pub executable_lines: BTreeSet<u32>,
    pub decision_lines: BTreeSet<u32>,
}

impl SourceUnit {
    pub fn statement(&self, line: u32) -> Option<&StatementInfo> {
        self.statements.binary_search_by_key(&line, |s| s.line).ok().map(|i| &self.statements[i])
    }

    pub fn line_id(&self, line: u32) -> LineId {
        LineId::new(self.file.clone(), line)
    }

    /// Physical source line (1-based), without its newline.
    pub fn line_text(&self, line: u32) -> Option<&str> {
        if line == 0 {
            return None;
        }
        self.text.lines().nth(line as usize - 1)
    }

    pub fn line_count(&self) -> usize {
        self.text.lines().count()
    }

    pub fn is_executable(&self, line: u32) -> bool {
        self.executable_lines.contains(&line)
    }

    pub fn check_executable(&self, line: u32) -> Result<(), SubjectError> {
        if self.is_executable(line) {
            Ok(())
        } else {
            Err(SubjectError::UnknownLine { file: self.file.clone(), line })
        }
    }
}

/// Parses subject source text into a line-indexed [`SourceUnit`].
pub fn parse_unit(text: &str, path: &str) -> Result<SourceUnit, SubjectError> {
    let body = parser::parse_module(path, text)?;
    let mut statements = Vec::new();
    collect_statements(&body, &mut statements);
    statements.sort_by_key(|s| s.line);
    let executable_lines =
        statements.iter().filter(|s| !s.kind.is_structural()).map(|s| s.line).collect::<BTreeSet<_>>();
    let decision_lines = statements.iter().filter(|s| s.kind.is_decision()).map(|s| s.line).collect();
    Ok(SourceUnit { file: path.to_string(), text: text.to_string(), body, statements, executable_lines, decision_lines })
}

pub(crate) fn is_docstring(block: &[Stmt], idx: usize) -> bool {
    idx == 0 && matches!(&block[0].kind, StmtKind::Expr(Expr::Constant(c)) if is_string_literal(c))
}

fn is_string_literal(text: &str) -> bool {
    text.trim_start_matches(|c: char| "rRbBuU".contains(c)).starts_with(['"', '\''])
}

fn collect_statements(block: &[Stmt], out: &mut Vec<StatementInfo>) {
    for (i, stmt) in block.iter().enumerate() {
        let docstring = is_docstring(block, i);
        collect_one(stmt, docstring, out);
    }
}

fn collect_one(stmt: &Stmt, docstring: bool, out: &mut Vec<StatementInfo>) {
    let names = statement_names(stmt);
    let kind = match &stmt.kind {
        StmtKind::Expr(_) if docstring => StatementKind::Docstring,
        StmtKind::Expr(_) => StatementKind::Expr,
        StmtKind::Assign { .. } | StmtKind::AnnAssign { .. } => StatementKind::Assign,
        StmtKind::AugAssign { .. } => StatementKind::AugAssign,
        StmtKind::Return(_) => StatementKind::Return,
        StmtKind::Raise(..) => StatementKind::Raise,
        StmtKind::Assert(..) => StatementKind::Assert,
        StmtKind::Del(_) => StatementKind::Del,
        StmtKind::Pass => StatementKind::Pass,
        StmtKind::Break => StatementKind::Break,
        StmtKind::Continue => StatementKind::Continue,
        StmtKind::Global(_) | StmtKind::Nonlocal(_) => StatementKind::Global,
        StmtKind::Import(_) => StatementKind::Import,
        StmtKind::If { is_elif: false, .. } => StatementKind::If,
        StmtKind::If { is_elif: true, .. } => StatementKind::Elif,
        StmtKind::While { .. } => StatementKind::While,
        StmtKind::For { .. } => StatementKind::For,
        StmtKind::FunctionDef { .. } => StatementKind::Def,
        StmtKind::ClassDef { .. } => StatementKind::Class,
    };
    out.push(StatementInfo {
        line: stmt.line,
        start_line: stmt.start_line,
        header_end: stmt.header_end,
        indent: stmt.indent,
        kind,
        referenced: names.referenced,
        defs: names.defs,
    });
    match &stmt.kind {
        StmtKind::If { body, orelse, .. } => {
            collect_statements(body, out);
            match orelse {
                Some(ElseClause::Elif(elif)) => collect_one(elif, false, out),
                Some(ElseClause::Else { line, indent, body }) => {
                    out.push(StatementInfo {
                        line: *line,
                        start_line: *line,
                        header_end: *line,
                        indent: *indent,
                        kind: StatementKind::Else,
                        referenced: Vec::new(),
                        defs: Vec::new(),
                    });
                    collect_statements(body, out);
                }
                None => {}
            }
        }
        StmtKind::While { body, .. }
        | StmtKind::For { body, .. }
        | StmtKind::FunctionDef { body, .. }
        | StmtKind::ClassDef { body, .. } => collect_statements(body, out),
        _ => {}
    }
}
