//! Two-phase backward slicing from a target line.
//!
//! Phase one keeps the lines that can execute before the target on some
//! control-flow path from the function entry. Phase two closes the target
//! under reaching-definition data dependences and control dependences,
//! restricted to the phase-one candidates. The result is rendered back to
//! source that keeps the original line order and re-parses: emptied arms get
//! a `pass`, and the target line carries a `# <-- target` marker.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::subject::ast::{ElseClause, Stmt, StmtKind};
use crate::subject::{parse_unit, Cdg, Cfg, LineId, Node, SourceUnit, StatementKind, SubjectError};

pub const TARGET_MARKER: &str = "# <-- target";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SliceError {
    #[error(transparent)]
    Subject(#[from] SubjectError),
    #[error("rendered slice for {target} does not re-parse: {source}")]
    Render { target: LineId, source: SubjectError },
}

/// One physical line of a rendered slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedLine {
    /// Source text without trailing comments or whitespace.
    pub code: String,
    /// Original physical line, `None` for inserted `pass` lines.
    pub origin: Option<u32>,
    /// Set on the last physical line of a statement: the statement's line.
    pub ends_statement: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub target: LineId,
    /// Retained statement lines, structural lines included.
    pub retained: BTreeSet<u32>,
    pub lines: Vec<RenderedLine>,
    pub rendered_text: String,
    /// Original physical line -> 1-based rendered line.
    pub line_map: BTreeMap<u32, u32>,
    /// Fraction of the unit's executable lines dropped by slicing.
    pub reduction_ratio: f64,
}

impl Slice {
    /// Rendered line number of the target statement's last physical line.
    pub fn target_rendered_line(&self) -> Option<u32> {
        self.lines.iter().position(|l| l.ends_statement == Some(self.target.line)).map(|i| i as u32 + 1)
    }

    /// Rendering with every line suffixed by its original line number.
    pub fn render_with_line_numbers(&self) -> String {
        let width = self.lines.iter().map(|l| l.code.chars().count()).max().unwrap_or(0) + 2;
        let mut out = String::new();
        for l in &self.lines {
            let mut text = l.code.clone();
            let mut comment = match l.origin {
                Some(o) => format!("# L{o}"),
                None => String::new(),
            };
            if l.ends_statement == Some(self.target.line) {
                comment = if comment.is_empty() { TARGET_MARKER.to_string() } else { format!("{comment} <-- target") };
            }
            if !comment.is_empty() {
                pad_to(&mut text, width);
                text.push_str(&comment);
            }
            out.push_str(&text);
            out.push('\n');
        }
        out
    }
}

pub(crate) fn pad_to(text: &mut String, width: usize) {
    let n = text.chars().count();
    text.push_str(&" ".repeat(width.saturating_sub(n).max(1)));
}

/// Phase one: lines that lie on some entry-to-target path before the target,
/// plus the structural lines (headers, `else:`) needed to keep them in place.
pub fn reachable_prefix_filter(unit: &SourceUnit, cfg: &Cfg, target: &LineId) -> Result<BTreeSet<u32>, SubjectError> {
    check_target(unit, target)?;
    let scope = cfg.scope_of(target.line).ok_or_else(|| unknown(target))?;
    let Some(entry) = scope.entry else { return Err(unknown(target)) };
    Ok(with_structure(unit, &prefix_lines(cfg, entry, &[target.line])))
}

/// Lines reachable from `entry` that can reach one of `sinks`.
fn prefix_lines(cfg: &Cfg, entry: Node, sinks: &[u32]) -> BTreeSet<u32> {
    let forward = reach(cfg, [entry], true);
    let backward = reach(cfg, sinks.iter().map(|&l| Node::Line(l)), false);
    forward.intersection(&backward).filter_map(|n| n.line()).collect()
}

fn reach(cfg: &Cfg, from: impl IntoIterator<Item = Node>, forward: bool) -> BTreeSet<Node> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<Node> = from.into_iter().collect();
    while let Some(n) = queue.pop_front() {
        if seen.insert(n) {
            let next = if forward { cfg.successors(n) } else { cfg.predecessors(n) };
            queue.extend(next.iter().map(|(m, _)| *m));
        }
    }
    seen
}

/// Phase two: least set containing the target closed under reaching
/// definitions and control dependence, within `candidates`.
pub fn dependency_closure(
    unit: &SourceUnit,
    cfg: &Cfg,
    cdg: &Cdg,
    target: &LineId,
    candidates: &BTreeSet<u32>,
) -> Result<BTreeSet<u32>, SubjectError> {
    check_target(unit, target)?;
    let scope = cfg.scope_of(target.line).ok_or_else(|| unknown(target))?;
    Ok(closure_from(unit, cfg, cdg, scope.id, &[target.line], candidates))
}

fn closure_from(unit: &SourceUnit, cfg: &Cfg, cdg: &Cdg, scope: usize, seeds: &[u32], candidates: &BTreeSet<u32>) -> BTreeSet<u32> {
    let reaching = reaching_definitions(unit, cfg, scope);
    let mut closure: BTreeSet<u32> = seeds.iter().copied().collect();
    let mut work = seeds.to_vec();
    while let Some(line) = work.pop() {
        let mut deps: Vec<u32> = cdg.controls(line).iter().map(|c| c.line).collect();
        if let (Some(stmt), Some(defs_in)) = (unit.statement(line), reaching.get(&line)) {
            for name in &stmt.referenced {
                deps.extend(defs_in.iter().filter(|(n, _)| n == name).map(|&(_, d)| d));
            }
        }
        for d in deps {
            if candidates.contains(&d) && closure.insert(d) {
                work.push(d);
            }
        }
    }
    closure
}

/// Jump statements (return, raise, break, continue) of the target's scope
/// that keep control away from the target: were the jump a plain fall
/// through, the target could be reached from where it lands.
pub fn guarding_jumps(unit: &SourceUnit, cfg: &Cfg, target: &LineId) -> BTreeSet<u32> {
    let Some(scope) = cfg.scope_of(target.line) else { return BTreeSet::new() };
    let Some(entry) = scope.entry else { return BTreeSet::new() };
    let mut fallthrough = Vec::new();
    jump_fallthroughs(&unit.body, None, &mut fallthrough);
    let live = reach(cfg, [entry], true);
    fallthrough
        .into_iter()
        .filter(|&(j, next)| {
            scope.nodes.contains(&j)
                && live.contains(&Node::Line(j))
                && next.is_some_and(|n| reach(cfg, [Node::Line(n)], true).contains(&Node::Line(target.line)))
        })
        .map(|(j, _)| j)
        .collect()
}

/// (jump line, line control would reach if the jump fell through); `None`
/// stands for leaving the function.
fn jump_fallthroughs(block: &[Stmt], after: Option<u32>, out: &mut Vec<(u32, Option<u32>)>) {
    for (i, s) in block.iter().enumerate() {
        let next = block.get(i + 1).map(|n| n.line).or(after);
        match &s.kind {
            StmtKind::Return(_) | StmtKind::Raise(..) | StmtKind::Break | StmtKind::Continue => out.push((s.line, next)),
            StmtKind::If { .. } => {
                let mut cur = s;
                loop {
                    let StmtKind::If { body, orelse, .. } = &cur.kind else { unreachable!() };
                    jump_fallthroughs(body, next, out);
                    match orelse {
                        Some(ElseClause::Elif(e)) => cur = e,
                        Some(ElseClause::Else { body, .. }) => {
                            jump_fallthroughs(body, next, out);
                            break;
                        }
                        None => break,
                    }
                }
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => jump_fallthroughs(body, Some(s.line), out),
            StmtKind::FunctionDef { body, .. } => jump_fallthroughs(body, None, out),
            StmtKind::ClassDef { body, .. } => jump_fallthroughs(body, next, out),
            _ => {}
        }
    }
}

/// Computes the two-phase backward slice of `target` and renders it.
pub fn backward_slice(unit: &SourceUnit, cfg: &Cfg, cdg: &Cdg, target: &LineId) -> Result<Slice, SliceError> {
    let candidates = reachable_prefix_filter(unit, cfg, target)?;
    let scope = cfg.scope_of(target.line).ok_or_else(|| unknown(target))?;
    // Early exits that keep control away from the target decide whether it
    // is reached at all; they join the slice with their own dependences.
    let jumps = guarding_jumps(unit, cfg, target);
    let mut closure = if jumps.is_empty() {
        dependency_closure(unit, cfg, cdg, target, &candidates)?
    } else {
        let mut seeds = vec![target.line];
        seeds.extend(&jumps);
        let entry = scope.entry.ok_or_else(|| unknown(target))?;
        let candidates = with_structure(unit, &prefix_lines(cfg, entry, &seeds));
        closure_from(unit, cfg, cdg, scope.id, &seeds, &candidates)
    };
    if let Some(header) = scope.header {
        closure.insert(header);
    }
    for s in &unit.body {
        if matches!(s.kind, StmtKind::Import(_)) {
            closure.insert(s.line);
        }
    }
    let retained = with_structure(unit, &closure);
    let lines = render_lines(unit, &retained);

    let mut rendered_text = String::new();
    let mut line_map = BTreeMap::new();
    for (i, l) in lines.iter().enumerate() {
        rendered_text.push_str(&l.code);
        if l.ends_statement == Some(target.line) {
            rendered_text.push_str("  ");
            rendered_text.push_str(TARGET_MARKER);
        }
        rendered_text.push('\n');
        if let Some(o) = l.origin {
            line_map.insert(o, i as u32 + 1);
        }
    }
    if let Err(source) = parse_unit(&rendered_text, &unit.file) {
        return Err(SliceError::Render { target: target.clone(), source });
    }

    let total = unit.executable_lines.len();
    let kept = retained.iter().filter(|l| unit.executable_lines.contains(l)).count();
    let reduction_ratio = if total == 0 { 0.0 } else { 1.0 - kept as f64 / total as f64 };
    Ok(Slice { target: target.clone(), retained, lines, rendered_text, line_map, reduction_ratio })
}

fn check_target(unit: &SourceUnit, target: &LineId) -> Result<(), SubjectError> {
    if target.file != unit.file {
        return Err(unknown(target));
    }
    unit.check_executable(target.line)
}

fn unknown(target: &LineId) -> SubjectError {
    SubjectError::UnknownLine { file: target.file.clone(), line: target.line }
}

/// Reaching definitions at the entry of every line node of one scope, as
/// `(name, defining line)` pairs. Subscript and attribute writes do not kill.
pub fn reaching_definitions(unit: &SourceUnit, cfg: &Cfg, scope: usize) -> BTreeMap<u32, BTreeSet<(String, u32)>> {
    let nodes = &cfg.scopes[scope].nodes;
    let defs_of = |line: u32| unit.statement(line).map(|s| s.defs.clone()).unwrap_or_default();
    let mut input: BTreeMap<u32, BTreeSet<(String, u32)>> = nodes.iter().map(|&l| (l, BTreeSet::new())).collect();
    let mut output: BTreeMap<u32, BTreeSet<(String, u32)>> = input.clone();
    let mut work: VecDeque<u32> = nodes.iter().copied().collect();
    let mut queued: BTreeSet<u32> = nodes.clone();
    while let Some(line) = work.pop_front() {
        queued.remove(&line);
        let mut inn = BTreeSet::new();
        for (p, _) in cfg.predecessors(Node::Line(line)) {
            if let Some(l) = p.line() {
                if let Some(o) = output.get(&l) {
                    inn.extend(o.iter().cloned());
                }
            }
        }
        let defs = defs_of(line);
        let mut out: BTreeSet<(String, u32)> =
            inn.iter().filter(|(n, _)| !defs.iter().any(|d| d.strong && &d.name == n)).cloned().collect();
        out.extend(defs.iter().map(|d| (d.name.clone(), line)));
        input.insert(line, inn);
        if output.get(&line) != Some(&out) {
            output.insert(line, out);
            for (s, _) in cfg.successors(Node::Line(line)) {
                if let Some(l) = s.line() {
                    if nodes.contains(&l) && queued.insert(l) {
                        work.push_back(l);
                    }
                }
            }
        }
    }
    input
}

/// Adds every line that must accompany `lines` for the result to be a
/// well-formed block structure: enclosing headers, earlier headers of an
/// `if`/`elif` chain, and `else:` lines of arms holding kept lines.
pub fn with_structure(unit: &SourceUnit, lines: &BTreeSet<u32>) -> BTreeSet<u32> {
    let mut required = BTreeMap::new();
    let mut stack = Vec::new();
    requirements(&unit.body, &mut stack, &mut required);
    let mut out = lines.clone();
    for l in lines {
        if let Some(req) = required.get(l) {
            out.extend(req.iter().copied());
        }
    }
    out
}

fn requirements(block: &[Stmt], stack: &mut Vec<u32>, out: &mut BTreeMap<u32, Vec<u32>>) {
    for s in block {
        out.insert(s.line, stack.clone());
        match &s.kind {
            StmtKind::If { .. } => {
                let mark = stack.len();
                let mut cur = s;
                loop {
                    out.insert(cur.line, stack.clone());
                    stack.push(cur.line);
                    let StmtKind::If { body, orelse, .. } = &cur.kind else { unreachable!() };
                    requirements(body, stack, out);
                    match orelse {
                        Some(ElseClause::Elif(e)) => cur = e,
                        Some(ElseClause::Else { line, body, .. }) => {
                            out.insert(*line, stack.clone());
                            stack.push(*line);
                            requirements(body, stack, out);
                            break;
                        }
                        None => break,
                    }
                }
                stack.truncate(mark);
            }
            StmtKind::While { body, .. }
            | StmtKind::For { body, .. }
            | StmtKind::FunctionDef { body, .. }
            | StmtKind::ClassDef { body, .. } => {
                stack.push(s.line);
                requirements(body, stack, out);
                stack.pop();
            }
            _ => {}
        }
    }
}

fn render_lines(unit: &SourceUnit, retained: &BTreeSet<u32>) -> Vec<RenderedLine> {
    let src: Vec<&str> = unit.text.lines().collect();
    let mut out = Vec::new();
    render_block(&unit.body, &src, retained, &mut out);
    out
}

/// Renders the kept statements of a block; returns whether anything was emitted.
fn render_block(block: &[Stmt], src: &[&str], retained: &BTreeSet<u32>, out: &mut Vec<RenderedLine>) -> bool {
    let mut emitted = false;
    for (i, s) in block.iter().enumerate() {
        if crate::subject::is_docstring(block, i) || !retained.contains(&s.line) {
            continue;
        }
        emitted = true;
        emit_span(src, s.start_line, s.header_end, s.line, out);
        match &s.kind {
            StmtKind::If { .. } => render_if(s, src, retained, out),
            StmtKind::While { body, .. }
            | StmtKind::For { body, .. }
            | StmtKind::FunctionDef { body, .. }
            | StmtKind::ClassDef { body, .. } => render_body(body, src, retained, out),
            _ => {}
        }
    }
    emitted
}

fn render_if(s: &Stmt, src: &[&str], retained: &BTreeSet<u32>, out: &mut Vec<RenderedLine>) {
    let StmtKind::If { body, orelse, .. } = &s.kind else { return };
    render_body(body, src, retained, out);
    match orelse {
        Some(ElseClause::Elif(e)) if retained.contains(&e.line) => {
            emit_span(src, e.start_line, e.header_end, e.line, out);
            render_if(e, src, retained, out);
        }
        Some(ElseClause::Else { line, body, .. }) if retained.contains(line) => {
            emit_span(src, *line, *line, *line, out);
            render_body(body, src, retained, out);
        }
        _ => {}
    }
}

fn render_body(body: &[Stmt], src: &[&str], retained: &BTreeSet<u32>, out: &mut Vec<RenderedLine>) {
    if !render_block(body, src, retained, out) {
        let indent = body.first().map_or(4, |s| s.indent) as usize;
        out.push(RenderedLine { code: format!("{}pass", " ".repeat(indent)), origin: None, ends_statement: None });
    }
}

fn emit_span(src: &[&str], from: u32, to: u32, stmt_line: u32, out: &mut Vec<RenderedLine>) {
    let mut state = None;
    for l in from..=to {
        let raw = src.get(l as usize - 1).copied().unwrap_or("");
        let code = strip_comment(raw, &mut state).trim_end().to_string();
        out.push(RenderedLine { code, origin: Some(l), ends_statement: (l == to).then_some(stmt_line) });
    }
}

/// Open string literal carried across physical lines: (quote, triple).
pub type StringState = Option<(char, bool)>;

/// Removes a trailing `#` comment from one physical line, tracking string
/// literals (including triple-quoted ones that continue across lines).
pub fn strip_comment<'a>(line: &'a str, state: &mut StringState) -> &'a str {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        match *state {
            Some((q, triple)) => {
                if c == '\\' {
                    i += 2;
                    continue;
                }
                if c == q {
                    if !triple {
                        *state = None;
                    } else if chars.get(i + 1).map(|x| x.1) == Some(q) && chars.get(i + 2).map(|x| x.1) == Some(q) {
                        *state = None;
                        i += 3;
                        continue;
                    }
                }
            }
            None => match c {
                '#' => return &line[..pos],
                '"' | '\'' => {
                    let triple = chars.get(i + 1).map(|x| x.1) == Some(c) && chars.get(i + 2).map(|x| x.1) == Some(c);
                    *state = Some((c, triple));
                    i += if triple { 3 } else { 1 };
                    continue;
                }
                _ => {}
            },
        }
        i += 1;
    }
    if matches!(*state, Some((_, false))) {
        *state = None;
    }
    line
}

/// Kind of a retained line, for callers that annotate rendered slices.
pub fn is_annotatable(unit: &SourceUnit, line: u32) -> bool {
    unit.statement(line).is_some_and(|s| !s.kind.is_structural() && s.kind != StatementKind::Docstring)
}
