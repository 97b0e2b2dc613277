//! Statement-level control-flow graphs, one per code scope.
//!
//! Every function body is its own scope with the `def` line as entry node
//! and a synthetic exit node. Module-level code forms scope 0. Class bodies
//! run inline in their enclosing scope; nested `def`s are skipped in the
//! enclosing flow and get scopes of their own.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::{ElseClause, Stmt, StmtKind};
use super::{is_docstring, SourceUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Line(u32),
    /// Synthetic exit of the scope with this index.
    Exit(usize),
}

impl Node {
    pub fn line(self) -> Option<u32> {
        match self {
            Node::Line(l) => Some(l),
            Node::Exit(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Fallthrough,
    BranchTrue,
    BranchFalse,
    LoopBack,
    LoopExit,
}

impl EdgeKind {
    /// Branch outcome carried by the edge; loop exits are the false outcome
    /// of the loop header's implicit test.
    pub fn polarity(self) -> Option<bool> {
        match self {
            EdgeKind::BranchTrue => Some(true),
            EdgeKind::BranchFalse | EdgeKind::LoopExit => Some(false),
            EdgeKind::Fallthrough | EdgeKind::LoopBack => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    Module,
    Function,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scope {
    pub id: usize,
    pub kind: ScopeKind,
    pub name: String,
    /// Innermost enclosing class, for methods.
    pub class_name: Option<String>,
    /// `def` line for functions.
    pub header: Option<u32>,
    pub entry: Option<Node>,
    pub nodes: BTreeSet<u32>,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub file: String,
    pub scopes: Vec<Scope>,
    succ: BTreeMap<Node, Vec<(Node, EdgeKind)>>,
    pred: BTreeMap<Node, Vec<(Node, EdgeKind)>>,
    node_scope: BTreeMap<u32, usize>,
    executable: BTreeSet<u32>,
}

impl Cfg {
    pub fn executable_lines(&self) -> &BTreeSet<u32> {
        &self.executable
    }

    pub fn successors(&self, node: Node) -> &[(Node, EdgeKind)] {
        self.succ.get(&node).map_or(&[], Vec::as_slice)
    }

    pub fn predecessors(&self, node: Node) -> &[(Node, EdgeKind)] {
        self.pred.get(&node).map_or(&[], Vec::as_slice)
    }

    /// All line nodes, ascending.
    pub fn nodes(&self) -> impl Iterator<Item = u32> + '_ {
        self.node_scope.keys().copied()
    }

    pub fn contains(&self, line: u32) -> bool {
        self.node_scope.contains_key(&line)
    }

    pub fn scope_of(&self, line: u32) -> Option<&Scope> {
        self.node_scope.get(&line).map(|&i| &self.scopes[i])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Node, Node, EdgeKind)> + '_ {
        self.succ.iter().flat_map(|(&from, outs)| outs.iter().map(move |&(to, kind)| (from, to, kind)))
    }

    pub fn edge_kind(&self, from: Node, to: Node) -> Option<EdgeKind> {
        self.successors(from).iter().find(|(n, _)| *n == to).map(|&(_, k)| k)
    }

    /// Successor of a decision line under the given branch outcome.
    pub fn branch_target(&self, line: u32, polarity: bool) -> Option<Node> {
        self.successors(Node::Line(line)).iter().find(|(_, k)| k.polarity() == Some(polarity)).map(|&(n, _)| n)
    }

    /// All nodes of a scope, including its exit.
    pub fn scope_nodes(&self, scope: usize) -> Vec<Node> {
        let mut v: Vec<Node> = self.scopes[scope].nodes.iter().map(|&l| Node::Line(l)).collect();
        v.push(Node::Exit(scope));
        v
    }
}

#[derive(Clone, Copy)]
struct LoopCtx {
    header: u32,
    after: (Node, EdgeKind),
}

struct Builder {
    cfg: Cfg,
}

/// Builds the control-flow graph of every scope in `unit`.
pub fn build_cfg(unit: &SourceUnit) -> Cfg {
    let mut b = Builder {
        cfg: Cfg {
            file: unit.file.clone(),
            scopes: Vec::new(),
            succ: BTreeMap::new(),
            pred: BTreeMap::new(),
            node_scope: BTreeMap::new(),
            executable: unit.executable_lines.clone(),
        },
    };
    let end_line = unit.body.last().map_or(0, |s| s.end_line);
    b.cfg.scopes.push(Scope {
        id: 0,
        kind: ScopeKind::Module,
        name: "<module>".into(),
        class_name: None,
        header: None,
        entry: None,
        nodes: BTreeSet::new(),
        start_line: 1,
        end_line,
    });
    let (entry, _) = b.block(0, &unit.body, (Node::Exit(0), EdgeKind::Fallthrough), None, None);
    b.cfg.scopes[0].entry = entry.line().map(Node::Line);
    b.cfg
}

impl Builder {
    fn edge(&mut self, scope: usize, from: u32, to: Node, kind: EdgeKind) {
        self.cfg.node_scope.insert(from, scope);
        self.cfg.scopes[scope].nodes.insert(from);
        self.cfg.succ.entry(Node::Line(from)).or_default().push((to, kind));
        self.cfg.pred.entry(to).or_default().push((Node::Line(from), kind));
    }

    fn block(
        &mut self,
        scope: usize,
        stmts: &[Stmt],
        follow: (Node, EdgeKind),
        lp: Option<LoopCtx>,
        class: Option<&str>,
    ) -> (Node, EdgeKind) {
        let mut next = follow;
        for (i, s) in stmts.iter().enumerate().rev() {
            if is_docstring(stmts, i) {
                continue;
            }
            next = self.stmt(scope, s, next, lp, class);
        }
        next
    }

    fn stmt(
        &mut self,
        scope: usize,
        s: &Stmt,
        follow: (Node, EdgeKind),
        lp: Option<LoopCtx>,
        class: Option<&str>,
    ) -> (Node, EdgeKind) {
        let line = s.line;
        match &s.kind {
            StmtKind::FunctionDef { name, body, .. } => {
                self.function(s.line, s.start_line, s.end_line, name, body, class);
                follow
            }
            StmtKind::ClassDef { name, body, .. } => self.block(scope, body, follow, lp, Some(name)),
            StmtKind::Return(_) | StmtKind::Raise(..) => {
                self.edge(scope, line, Node::Exit(scope), EdgeKind::Fallthrough);
                (Node::Line(line), EdgeKind::Fallthrough)
            }
            StmtKind::Break => {
                let target = lp.map_or(follow, |l| l.after);
                self.edge(scope, line, target.0, target.1);
                (Node::Line(line), EdgeKind::Fallthrough)
            }
            StmtKind::Continue => {
                match lp {
                    Some(l) => self.edge(scope, line, Node::Line(l.header), EdgeKind::LoopBack),
                    None => self.edge(scope, line, follow.0, follow.1),
                }
                (Node::Line(line), EdgeKind::Fallthrough)
            }
            StmtKind::If { body, orelse, .. } => {
                let t = self.block(scope, body, follow, lp, class);
                let f = match orelse {
                    Some(ElseClause::Elif(elif)) => self.stmt(scope, elif, follow, lp, class),
                    Some(ElseClause::Else { body, .. }) => self.block(scope, body, follow, lp, class),
                    None => follow,
                };
                self.edge(scope, line, t.0, EdgeKind::BranchTrue);
                self.edge(scope, line, f.0, EdgeKind::BranchFalse);
                (Node::Line(line), EdgeKind::Fallthrough)
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => {
                let ctx = LoopCtx { header: line, after: follow };
                let b = self.block(scope, body, (Node::Line(line), EdgeKind::LoopBack), Some(ctx), class);
                self.edge(scope, line, b.0, EdgeKind::BranchTrue);
                self.edge(scope, line, follow.0, EdgeKind::LoopExit);
                (Node::Line(line), EdgeKind::Fallthrough)
            }
            _ => {
                self.edge(scope, line, follow.0, follow.1);
                (Node::Line(line), EdgeKind::Fallthrough)
            }
        }
    }

    fn function(&mut self, header: u32, start_line: u32, end_line: u32, name: &str, body: &[Stmt], class: Option<&str>) {
        let id = self.cfg.scopes.len();
        self.cfg.scopes.push(Scope {
            id,
            kind: ScopeKind::Function,
            name: name.to_string(),
            class_name: class.map(str::to_string),
            header: Some(header),
            entry: Some(Node::Line(header)),
            nodes: BTreeSet::new(),
            start_line,
            end_line,
        });
        let (entry, kind) = self.block(id, body, (Node::Exit(id), EdgeKind::Fallthrough), None, None);
        self.edge(id, header, entry, kind);
    }
}
