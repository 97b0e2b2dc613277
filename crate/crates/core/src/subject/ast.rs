//! Syntax tree for the supported Python subset.

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Name(String),
    /// Literal kept as its source text (numbers, strings, `None`, `True`, `...`).
    Constant(String),
    /// f-string: the embedded replacement-field expressions.
    FString(Vec<Expr>),
    Attribute(Box<Expr>, String),
    Subscript(Box<Expr>, Box<Expr>),
    Slice(Option<Box<Expr>>, Option<Box<Expr>>, Option<Box<Expr>>),
    Call { func: Box<Expr>, args: Vec<Arg> },
    BinOp(Box<Expr>, String, Box<Expr>),
    UnaryOp(String, Box<Expr>),
    BoolOp(String, Vec<Expr>),
    Compare(Box<Expr>, Vec<(String, Expr)>),
    IfExp { test: Box<Expr>, body: Box<Expr>, orelse: Box<Expr> },
    Lambda { params: Vec<Param>, body: Box<Expr> },
    NamedExpr(String, Box<Expr>),
    Tuple(Vec<Expr>),
    List(Vec<Expr>),
    Set(Vec<Expr>),
    /// `None` key marks a `**mapping` entry.
    Dict(Vec<(Option<Expr>, Expr)>),
    Comprehension { kind: CompKind, elt: Box<Expr>, value: Option<Box<Expr>>, generators: Vec<Generator> },
    Starred(Box<Expr>),
    DoubleStarred(Box<Expr>),
    Yield(Option<Box<Expr>>),
    YieldFrom(Box<Expr>),
    Await(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompKind {
    List,
    Set,
    Dict,
    Generator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub target: Expr,
    pub iter: Expr,
    pub ifs: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arg {
    pub keyword: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub annotation: Option<Expr>,
    pub default: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    /// Line of the statement keyword (the `def` line for decorated functions).
    pub line: u32,
    /// First physical line, including decorators.
    pub start_line: u32,
    /// Last physical line of the header (compound) or of the whole statement (simple).
    pub header_end: u32,
    /// Last physical line including any body.
    pub end_line: u32,
    pub indent: u32,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Expr(Expr),
    Assign { targets: Vec<Expr>, value: Expr },
    AnnAssign { target: Expr, annotation: Expr, value: Option<Expr> },
    AugAssign { target: Expr, op: String, value: Expr },
    Return(Option<Expr>),
    Raise(Option<Expr>, Option<Expr>),
    Assert(Expr, Option<Expr>),
    Del(Vec<Expr>),
    Pass,
    Break,
    Continue,
    Global(Vec<String>),
    Nonlocal(Vec<String>),
    /// Names bound by the import.
    Import(Vec<String>),
    If { test: Expr, body: Vec<Stmt>, orelse: Option<ElseClause>, is_elif: bool },
    While { test: Expr, body: Vec<Stmt> },
    For { target: Expr, iter: Expr, body: Vec<Stmt> },
    FunctionDef { name: String, params: Vec<Param>, decorators: Vec<Expr>, returns: Option<Expr>, body: Vec<Stmt> },
    ClassDef { name: String, bases: Vec<Arg>, decorators: Vec<Expr>, body: Vec<Stmt> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElseClause {
    /// An `elif`; the boxed statement is an `If` with `is_elif` set.
    Elif(Box<Stmt>),
    Else { line: u32, indent: u32, body: Vec<Stmt> },
}

impl Stmt {
    pub fn is_compound(&self) -> bool {
        matches!(
            self.kind,
            StmtKind::If { .. } | StmtKind::While { .. } | StmtKind::For { .. } | StmtKind::FunctionDef { .. } | StmtKind::ClassDef { .. }
        )
    }

    pub fn is_decision(&self) -> bool {
        matches!(self.kind, StmtKind::If { .. } | StmtKind::While { .. } | StmtKind::For { .. })
    }

    /// Nested statement blocks in source order.
    pub fn blocks(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::If { body, orelse, .. } => {
                let mut out: Vec<&[Stmt]> = vec![body];
                match orelse {
                    Some(ElseClause::Elif(s)) => out.extend(s.blocks()),
                    Some(ElseClause::Else { body, .. }) => out.push(body),
                    None => {}
                }
                out
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => vec![body],
            StmtKind::FunctionDef { body, .. } | StmtKind::ClassDef { body, .. } => vec![body],
            _ => Vec::new(),
        }
    }

    /// Depth-first walk over this statement and every nested one, including
    /// `elif` statements of an `if` chain.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::If { body, orelse, .. } => {
                body.iter().for_each(|s| s.walk(f));
                match orelse {
                    Some(ElseClause::Elif(s)) => s.walk(f),
                    Some(ElseClause::Else { body, .. }) => body.iter().for_each(|s| s.walk(f)),
                    None => {}
                }
            }
            StmtKind::While { body, .. }
            | StmtKind::For { body, .. }
            | StmtKind::FunctionDef { body, .. }
            | StmtKind::ClassDef { body, .. } => body.iter().for_each(|s| s.walk(f)),
            _ => {}
        }
    }
}

impl Expr {
    pub fn name(&self) -> Option<&str> {
        match self {
            Expr::Name(n) => Some(n),
            _ => None,
        }
    }
}
