//! Random programs in a tiny Python subset, with a direct interpreter over
//! the generator's own tree. Nothing here goes through the crate's parser
//! or graphs, so it can serve as an oracle for them.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub enum Expr {
    Var(&'static str),
    Int(i64),
    Add(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone)]
pub enum Cond {
    Flag(usize),
    Gt(&'static str, i64),
}

#[derive(Debug, Clone)]
pub enum Stmt {
    Assign { line: u32, var: &'static str, expr: Expr, aug: bool },
    If { arms: Vec<(u32, Cond, Vec<Stmt>)>, orelse: Option<(u32, Vec<Stmt>)> },
    For { line: u32, var: &'static str, n: u32, body: Vec<Stmt> },
    Return { line: u32, expr: Expr },
}

pub const FLAGS: usize = 3;
const PARAMS: [&str; 2] = ["a", "b"];
const LOCALS: [&str; 3] = ["x", "y", "z"];
const LOOP_VARS: [&str; 2] = ["i", "j"];

pub struct Program {
    pub text: String,
    pub body: Vec<Stmt>,
}

impl Expr {
    fn render(&self) -> String {
        match self {
            Expr::Var(v) => v.to_string(),
            Expr::Int(i) => i.to_string(),
            Expr::Add(a, b) => format!("{} + {}", a.render(), b.render()),
        }
    }

    fn names(&self, out: &mut Vec<&'static str>) {
        match self {
            Expr::Var(v) => out.push(v),
            Expr::Int(_) => {}
            Expr::Add(a, b) => {
                a.names(out);
                b.names(out);
            }
        }
    }
}

impl Cond {
    fn render(&self) -> String {
        match self {
            Cond::Flag(i) => format!("p{i}"),
            Cond::Gt(v, k) => format!("{v} > {k}"),
        }
    }
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    returns: bool,
    lines: Vec<String>,
    budget: usize,
    loop_depth: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn var(&mut self) -> &'static str {
        let pool: Vec<&'static str> = PARAMS.iter().chain(&LOCALS).chain(&LOOP_VARS[..self.loop_depth]).copied().collect();
        pool.choose(self.rng).copied().unwrap()
    }

    fn expr(&mut self) -> Expr {
        let mut e = if self.rng.gen_bool(0.7) { Expr::Var(self.var()) } else { Expr::Int(self.rng.gen_range(-3..6)) };
        for _ in 0..self.rng.gen_range(0..2) {
            let rhs = if self.rng.gen_bool(0.6) { Expr::Var(self.var()) } else { Expr::Int(self.rng.gen_range(1..4)) };
            e = Expr::Add(Box::new(e), Box::new(rhs));
        }
        e
    }

    fn cond(&mut self) -> Cond {
        if self.rng.gen_bool(0.5) {
            Cond::Flag(self.rng.gen_range(0..FLAGS))
        } else {
            Cond::Gt(self.var(), self.rng.gen_range(-2..8))
        }
    }

    fn emit(&mut self, depth: usize, text: String) -> u32 {
        self.lines.push(format!("{}{text}", "    ".repeat(depth)));
        self.lines.len() as u32
    }

    fn block(&mut self, depth: usize, allow_return: bool) -> Vec<Stmt> {
        let n = self.rng.gen_range(1..=3);
        let mut out = Vec::new();
        for i in 0..n {
            if self.budget == 0 && !out.is_empty() {
                break;
            }
            let last = i + 1 == n;
            out.push(self.stmt(depth, allow_return && last));
            if matches!(out.last(), Some(Stmt::Return { .. })) {
                break;
            }
        }
        out
    }

    fn stmt(&mut self, depth: usize, allow_return: bool) -> Stmt {
        self.budget = self.budget.saturating_sub(1);
        let roll = self.rng.gen_range(0..10);
        if depth < 4 && self.budget > 0 && roll < 3 {
            let mut arms = Vec::new();
            let cond = self.cond();
            let line = self.emit(depth, format!("if {}:", cond.render()));
            let body = self.block(depth + 1, true);
            arms.push((line, cond, body));
            while self.rng.gen_bool(0.3) {
                let cond = self.cond();
                let line = self.emit(depth, format!("elif {}:", cond.render()));
                let body = self.block(depth + 1, true);
                arms.push((line, cond, body));
            }
            let orelse = if self.rng.gen_bool(0.5) {
                let line = self.emit(depth, "else:".into());
                Some((line, self.block(depth + 1, true)))
            } else {
                None
            };
            return Stmt::If { arms, orelse };
        }
        if depth < 4 && self.budget > 0 && roll < 4 && self.loop_depth < LOOP_VARS.len() {
            let var = LOOP_VARS[self.loop_depth];
            let n = self.rng.gen_range(0..3);
            let line = self.emit(depth, format!("for {var} in range({n}):"));
            self.loop_depth += 1;
            let body = self.block(depth + 1, false);
            self.loop_depth -= 1;
            return Stmt::For { line, var, n, body };
        }
        if self.returns && allow_return && roll == 9 {
            let expr = self.expr();
            let line = self.emit(depth, format!("return {}", expr.render()));
            return Stmt::Return { line, expr };
        }
        let var = *LOCALS.choose(self.rng).unwrap();
        let expr = self.expr();
        let aug = self.rng.gen_bool(0.3);
        let op = if aug { "+=" } else { "=" };
        let line = self.emit(depth, format!("{var} {op} {}", expr.render()));
        Stmt::Assign { line, var, expr, aug }
    }
}

/// A function `f(p0, p1, p2, a, b)` of at most ~40 lines. With `returns`
/// unset the only return is the final one.
pub fn generate<R: Rng>(rng: &mut R, returns: bool) -> Program {
    let mut g = Gen { rng, returns, lines: Vec::new(), budget: 14, loop_depth: 0 };
    let flags: Vec<String> = (0..FLAGS).map(|i| format!("p{i}")).collect();
    g.emit(0, format!("def f({}, a, b):", flags.join(", ")));
    let mut body = Vec::new();
    for v in LOCALS {
        let line = g.emit(1, format!("{v} = 0"));
        body.push(Stmt::Assign { line, var: v, expr: Expr::Int(0), aug: false });
    }
    body.extend(g.block(1, false));
    while g.budget > 0 {
        body.push(g.stmt(1, false));
    }
    let line = g.emit(1, "return x + y + z".into());
    body.push(Stmt::Return {
        line,
        expr: Expr::Add(Box::new(Expr::Add(Box::new(Expr::Var("x")), Box::new(Expr::Var("y")))), Box::new(Expr::Var("z"))),
    });
    Program { text: g.lines.join("\n") + "\n", body }
}

#[derive(Debug, Clone, Copy)]
pub struct Inputs {
    pub flags: [bool; FLAGS],
    pub a: i64,
    pub b: i64,
}

/// Every input combination used by the exhaustive checks.
pub fn all_inputs() -> Vec<Inputs> {
    let mut out = Vec::new();
    for mask in 0..(1 << FLAGS) {
        for a in [-2, 0, 3, 7] {
            for b in [-1, 4] {
                let flags = std::array::from_fn(|i| mask & (1 << i) != 0);
                out.push(Inputs { flags, a, b });
            }
        }
    }
    out
}

/// One executed line with what an observer could see at that moment.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub line: u32,
    /// Values of the names the line reads, before it runs; absent names omitted.
    pub before: BTreeMap<&'static str, i64>,
    /// Values of the names on the line after it runs.
    pub after: BTreeMap<&'static str, i64>,
    /// Most recent outcome of every decision line evaluated so far.
    pub decisions: BTreeMap<u32, bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub steps: Vec<Step>,
    /// Every (decision line, outcome) evaluated.
    pub outcomes: BTreeSet<(u32, bool)>,
    /// Read of a name that was never assigned (a NameError in Python).
    pub crashed: bool,
}

struct Interp<'a> {
    inputs: Inputs,
    keep: Option<&'a BTreeSet<u32>>,
    env: BTreeMap<&'static str, i64>,
    latest: BTreeMap<u32, bool>,
    run: Run,
}

enum Flow {
    Next,
    Return,
    Crash,
}

impl Interp<'_> {
    fn kept(&self, line: u32) -> bool {
        self.keep.is_none_or(|k| k.contains(&line))
    }

    fn snapshot(&self, names: &[&'static str]) -> BTreeMap<&'static str, i64> {
        names.iter().filter_map(|n| self.env.get(n).map(|v| (*n, *v))).collect()
    }

    fn eval(&self, e: &Expr) -> Option<i64> {
        match e {
            Expr::Var(v) => self.env.get(v).copied(),
            Expr::Int(i) => Some(*i),
            Expr::Add(a, b) => Some(self.eval(a)? + self.eval(b)?),
        }
    }

    fn test(&self, c: &Cond) -> Option<bool> {
        match c {
            Cond::Flag(i) => Some(self.inputs.flags[*i]),
            Cond::Gt(v, k) => Some(self.env.get(v)? > k),
        }
    }

    fn begin(&mut self, line: u32, reads: &[&'static str]) -> usize {
        let before = self.snapshot(reads);
        self.run.steps.push(Step { line, before, after: BTreeMap::new(), decisions: self.latest.clone() });
        self.run.steps.len() - 1
    }

    fn decide(&mut self, line: u32, outcome: bool) {
        self.run.outcomes.insert((line, outcome));
        self.latest.insert(line, outcome);
    }

    fn block(&mut self, body: &[Stmt]) -> Flow {
        for s in body {
            match self.stmt(s) {
                Flow::Next => {}
                other => return other,
            }
        }
        Flow::Next
    }

    fn stmt(&mut self, s: &Stmt) -> Flow {
        match s {
            Stmt::Assign { line, var, expr, aug } => {
                if !self.kept(*line) {
                    return Flow::Next;
                }
                let mut reads = Vec::new();
                expr.names(&mut reads);
                if *aug {
                    reads.push(*var);
                }
                let i = self.begin(*line, &reads);
                let mut names = reads.clone();
                names.push(*var);
                let Some(mut v) = self.eval(expr) else { return Flow::Crash };
                if *aug {
                    let Some(old) = self.env.get(var) else { return Flow::Crash };
                    v += old;
                }
                self.env.insert(var, v);
                self.run.steps[i].after = self.snapshot(&names);
                Flow::Next
            }
            Stmt::Return { line, expr } => {
                if !self.kept(*line) {
                    return Flow::Next;
                }
                let mut names = Vec::new();
                expr.names(&mut names);
                let i = self.begin(*line, &names);
                if self.eval(expr).is_none() {
                    return Flow::Crash;
                }
                self.run.steps[i].after = self.snapshot(&names);
                Flow::Return
            }
            Stmt::If { arms, orelse } => {
                if !self.kept(arms[0].0) {
                    return Flow::Next;
                }
                for (line, cond, body) in arms {
                    if !self.kept(*line) {
                        continue;
                    }
                    let names: Vec<&'static str> = match cond {
                        Cond::Gt(v, _) => vec![v],
                        Cond::Flag(_) => vec![],
                    };
                    let i = self.begin(*line, &names);
                    let Some(taken) = self.test(cond) else { return Flow::Crash };
                    self.decide(*line, taken);
                    self.run.steps[i].after = self.snapshot(&names);
                    if taken {
                        return self.block(body);
                    }
                }
                match orelse {
                    Some((_, body)) => self.block(body),
                    None => Flow::Next,
                }
            }
            Stmt::For { line, var, n, body } => {
                if !self.kept(*line) {
                    return Flow::Next;
                }
                let mut k = 0;
                loop {
                    let i = self.begin(*line, &[]);
                    let more = k < *n;
                    self.decide(*line, more);
                    if !more {
                        self.run.steps[i].after = self.snapshot(&[var]);
                        return Flow::Next;
                    }
                    self.env.insert(var, k as i64);
                    self.run.steps[i].after = self.snapshot(&[var]);
                    k += 1;
                    match self.block(body) {
                        Flow::Next => {}
                        other => return other,
                    }
                }
            }
        }
    }
}

/// Runs the program, optionally keeping only the statements whose first
/// line is in `keep` (a slice, with dropped assignments simply absent).
pub fn execute(program: &Program, inputs: Inputs, keep: Option<&BTreeSet<u32>>) -> Run {
    let mut env = BTreeMap::new();
    env.insert("a", inputs.a);
    env.insert("b", inputs.b);
    let mut it = Interp { inputs, keep, env, latest: BTreeMap::new(), run: Run { steps: Vec::new(), outcomes: BTreeSet::new(), crashed: false } };
    it.run.crashed = matches!(it.block(&program.body), Flow::Crash);
    it.run
}
