//! Per-statement referenced/defined name extraction.
//!
//! Only the header of a compound statement is analysed (the test of an `if`,
//! the iterable and target of a `for`, parameters of a `def`); nested bodies
//! are separate statements. Names bound inside comprehensions and lambdas
//! are local to them and never reported as references of the statement.

use super::ast::*;

/// A binding produced by a statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Def {
    pub name: String,
    /// `false` for writes through a subscript or attribute (`d[k] = v`,
    /// `o.f = v`): they define the base name but do not kill earlier
    /// definitions of it.
    pub strong: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameSets {
    pub referenced: Vec<String>,
    pub defs: Vec<Def>,
}

impl NameSets {
    fn reference(&mut self, name: &str) {
        if !self.referenced.iter().any(|n| n == name) {
            self.referenced.push(name.to_string());
        }
    }

    fn define(&mut self, name: &str, strong: bool) {
        if let Some(d) = self.defs.iter_mut().find(|d| d.name == name) {
            d.strong |= strong;
        } else {
            self.defs.push(Def { name: name.to_string(), strong });
        }
    }

    pub fn defined(&self) -> Vec<String> {
        self.defs.iter().map(|d| d.name.clone()).collect()
    }
}

pub fn statement_names(stmt: &Stmt) -> NameSets {
    let mut out = NameSets::default();
    let mut bound = Vec::new();
    match &stmt.kind {
        StmtKind::Expr(e) => expr_refs(e, &mut bound, &mut out),
        StmtKind::Assign { targets, value } => {
            expr_refs(value, &mut bound, &mut out);
            for t in targets {
                target(t, &mut out, true);
            }
        }
        StmtKind::AnnAssign { target: t, value, .. } => {
            if let Some(v) = value {
                expr_refs(v, &mut bound, &mut out);
                target(t, &mut out, true);
            } else {
                target_refs_only(t, &mut out);
            }
        }
        StmtKind::AugAssign { target: t, value, .. } => {
            if let Some(base) = base_name(t) {
                out.reference(base);
            }
            target_refs_only(t, &mut out);
            expr_refs(value, &mut bound, &mut out);
            target(t, &mut out, true);
        }
        StmtKind::Return(v) => {
            if let Some(v) = v {
                expr_refs(v, &mut bound, &mut out);
            }
        }
        StmtKind::Raise(a, b) => {
            for e in [a, b].into_iter().flatten() {
                expr_refs(e, &mut bound, &mut out);
            }
        }
        StmtKind::Assert(t, m) => {
            expr_refs(t, &mut bound, &mut out);
            if let Some(m) = m {
                expr_refs(m, &mut bound, &mut out);
            }
        }
        StmtKind::Del(targets) => {
            for t in targets {
                target_refs_only(t, &mut out);
                if let Expr::Name(n) = t {
                    out.define(n, true);
                } else if let Some(base) = base_name(t) {
                    out.reference(base);
                    out.define(base, false);
                }
            }
        }
        StmtKind::Import(names) => {
            for n in names {
                out.define(n, true);
            }
        }
        StmtKind::If { test, .. } | StmtKind::While { test, .. } => expr_refs(test, &mut bound, &mut out),
        StmtKind::For { target: t, iter, .. } => {
            expr_refs(iter, &mut bound, &mut out);
            target(t, &mut out, true);
        }
        StmtKind::FunctionDef { params, decorators, .. } => {
            for d in decorators {
                expr_refs(d, &mut bound, &mut out);
            }
            for p in params {
                if let Some(d) = &p.default {
                    expr_refs(d, &mut bound, &mut out);
                }
            }
            for p in params {
                out.define(&p.name, true);
            }
        }
        StmtKind::ClassDef { bases, decorators, .. } => {
            for d in decorators {
                expr_refs(d, &mut bound, &mut out);
            }
            for a in bases {
                expr_refs(&a.value, &mut bound, &mut out);
            }
        }
        StmtKind::Pass | StmtKind::Break | StmtKind::Continue | StmtKind::Global(_) | StmtKind::Nonlocal(_) => {}
    }
    out
}

/// Base variable of an assignment target (`a` for `a`, `a.b`, `a[i].c`).
pub fn base_name(e: &Expr) -> Option<&str> {
    match e {
        Expr::Name(n) => Some(n),
        Expr::Attribute(b, _) | Expr::Subscript(b, _) => base_name(b),
        Expr::Starred(b) => base_name(b),
        _ => None,
    }
}

fn target(t: &Expr, out: &mut NameSets, strong_if_name: bool) {
    match t {
        Expr::Name(n) => out.define(n, strong_if_name),
        Expr::Tuple(items) | Expr::List(items) => items.iter().for_each(|i| target(i, out, strong_if_name)),
        Expr::Starred(inner) => target(inner, out, strong_if_name),
        Expr::Attribute(..) | Expr::Subscript(..) => {
            target_refs_only(t, out);
            if let Some(b) = base_name(t) {
                out.define(b, false);
            }
        }
        other => {
            let mut bound = Vec::new();
            expr_refs(other, &mut bound, out);
        }
    }
}

/// Names read while evaluating a target expression (subscript bases and
/// indices, attribute bases), without the binding itself.
fn target_refs_only(t: &Expr, out: &mut NameSets) {
    let mut bound = Vec::new();
    match t {
        Expr::Name(_) => {}
        Expr::Tuple(items) | Expr::List(items) => items.iter().for_each(|i| target_refs_only(i, out)),
        Expr::Starred(inner) => target_refs_only(inner, out),
        Expr::Attribute(base, _) => expr_refs(base, &mut bound, out),
        Expr::Subscript(base, index) => {
            expr_refs(base, &mut bound, out);
            expr_refs(index, &mut bound, out);
        }
        other => expr_refs(other, &mut bound, out),
    }
}

fn bind_target_names(t: &Expr, bound: &mut Vec<String>) {
    match t {
        Expr::Name(n) => bound.push(n.clone()),
        Expr::Tuple(items) | Expr::List(items) => items.iter().for_each(|i| bind_target_names(i, bound)),
        Expr::Starred(inner) => bind_target_names(inner, bound),
        _ => {}
    }
}

/// Collects free names read by `e` in evaluation order. Walrus targets are
/// recorded as strong definitions.
pub fn expr_refs(e: &Expr, bound: &mut Vec<String>, out: &mut NameSets) {
    match e {
        Expr::Name(n) => {
            if !bound.iter().any(|b| b == n) {
                out.reference(n);
            }
        }
        Expr::Constant(_) => {}
        Expr::FString(parts) => parts.iter().for_each(|p| expr_refs(p, bound, out)),
        Expr::Attribute(b, _) => expr_refs(b, bound, out),
        Expr::Subscript(b, i) => {
            expr_refs(b, bound, out);
            expr_refs(i, bound, out);
        }
        Expr::Slice(a, b, c) => {
            for x in [a, b, c].into_iter().flatten() {
                expr_refs(x, bound, out);
            }
        }
        Expr::Call { func, args } => {
            expr_refs(func, bound, out);
            for a in args {
                expr_refs(&a.value, bound, out);
            }
        }
        Expr::BinOp(l, _, r) => {
            expr_refs(l, bound, out);
            expr_refs(r, bound, out);
        }
        Expr::UnaryOp(_, x)
        | Expr::Starred(x)
        | Expr::DoubleStarred(x)
        | Expr::YieldFrom(x)
        | Expr::Await(x) => expr_refs(x, bound, out),
        Expr::Yield(x) => {
            if let Some(x) = x {
                expr_refs(x, bound, out);
            }
        }
        Expr::BoolOp(_, vs) | Expr::Tuple(vs) | Expr::List(vs) | Expr::Set(vs) => {
            vs.iter().for_each(|v| expr_refs(v, bound, out))
        }
        Expr::Compare(l, rest) => {
            expr_refs(l, bound, out);
            for (_, r) in rest {
                expr_refs(r, bound, out);
            }
        }
        Expr::IfExp { test, body, orelse } => {
            expr_refs(body, bound, out);
            expr_refs(test, bound, out);
            expr_refs(orelse, bound, out);
        }
        Expr::Lambda { params, body } => {
            for p in params {
                if let Some(d) = &p.default {
                    expr_refs(d, bound, out);
                }
            }
            let mark = bound.len();
            bound.extend(params.iter().map(|p| p.name.clone()));
            expr_refs(body, bound, out);
            bound.truncate(mark);
        }
        Expr::NamedExpr(n, v) => {
            expr_refs(v, bound, out);
            out.define(n, true);
        }
        Expr::Dict(entries) => {
            for (k, v) in entries {
                if let Some(k) = k {
                    expr_refs(k, bound, out);
                }
                expr_refs(v, bound, out);
            }
        }
        Expr::Comprehension { elt, value, generators, .. } => {
            let mark = bound.len();
            for g in generators {
                expr_refs(&g.iter, bound, out);
                bind_target_names(&g.target, bound);
                for cond in &g.ifs {
                    expr_refs(cond, bound, out);
                }
            }
            expr_refs(elt, bound, out);
            if let Some(v) = value {
                expr_refs(v, bound, out);
            }
            bound.truncate(mark);
        }
    }
}
