//! Execution in-lines: annotates a rendered slice with the step index and
//! post-state values recorded by a test's trace.
//!
//! ```text
//! x = a + b     # (1) a = 2; b = 3; x = 5
//! if x > 10:    # (2) x = 5
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use crate::slicer::{pad_to, Slice, TARGET_MARKER};
use crate::subject::{LineId, SourceUnit, StatementInfo};
use crate::trace::{truncate_value, ExecutionTrace, TraceEvent};

pub const NOT_EXECUTED: &str = "# not executed";

/// Gap between the longest annotated line and the comment column.
const COMMENT_GAP: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InlineError {
    #[error("trace event at {0} does not belong to any statement of the sliced unit")]
    LineMismatch(LineId),
}

/// Annotates `slice` (computed over `unit`) with the values from `trace`.
///
/// Each executed statement gets `# (k) name = value; …` for its first visit,
/// with ` | (k) …` for the last one when it ran more than once. Retained
/// statements that never ran get `# not executed`.
pub fn annotate_slice(unit: &SourceUnit, slice: &Slice, trace: &ExecutionTrace) -> Result<String, InlineError> {
    let mut visits: BTreeMap<u32, Vec<&TraceEvent>> = BTreeMap::new();
    for ev in trace.events.iter().filter(|e| e.line.file == unit.file) {
        let stmt = statement_at(unit, ev.line.line).ok_or_else(|| InlineError::LineMismatch(ev.line.clone()))?;
        if slice.retained.contains(&stmt.line) {
            visits.entry(stmt.line).or_default().push(ev);
        }
    }

    let mut comments: Vec<Option<String>> = Vec::with_capacity(slice.lines.len());
    for l in &slice.lines {
        let comment = l.ends_statement.and_then(|line| {
            let stmt = unit.statement(line)?;
            let mut text = if unit.is_executable(line) {
                match visits.get(&line) {
                    Some(v) => annotation(stmt, v),
                    None => NOT_EXECUTED.to_string(),
                }
            } else {
                String::new()
            };
            if line == slice.target.line {
                if !text.is_empty() {
                    text.push_str("  ");
                }
                text.push_str(TARGET_MARKER);
            }
            (!text.is_empty()).then_some(text)
        });
        comments.push(comment);
    }

    let width = slice
        .lines
        .iter()
        .zip(&comments)
        .filter(|(_, c)| c.is_some())
        .map(|(l, _)| l.code.chars().count())
        .max()
        .unwrap_or(0)
        + COMMENT_GAP;
    let mut out = String::new();
    for (l, c) in slice.lines.iter().zip(&comments) {
        let mut text = l.code.clone();
        if let Some(c) = c {
            pad_to(&mut text, width);
            text.push_str(c);
        }
        out.push_str(&text);
        out.push('\n');
    }
    Ok(out)
}

fn statement_at(unit: &SourceUnit, line: u32) -> Option<&StatementInfo> {
    let idx = unit.statements.partition_point(|s| s.start_line <= line);
    unit.statements[..idx].iter().rev().find(|s| s.start_line <= line && line <= s.header_end)
}

fn annotation(stmt: &StatementInfo, visits: &[&TraceEvent]) -> String {
    let mut text = format!("# {}", visit(stmt, visits[0]));
    if visits.len() > 1 {
        text.push_str(" | ");
        text.push_str(&visit(stmt, visits[visits.len() - 1]));
    }
    text
}

fn visit(stmt: &StatementInfo, ev: &TraceEvent) -> String {
    let mut names: Vec<&str> = stmt.referenced.iter().map(String::as_str).collect();
    for d in stmt.defined() {
        if !names.contains(&d) {
            names.push(d);
        }
    }
    let values: Vec<String> = names
        .iter()
        .filter_map(|n| ev.bindings.get(*n).map(|v| format!("{n} = {}", truncate_value(v))))
        .collect();
    if values.is_empty() {
        format!("({})", ev.step)
    } else {
        format!("({}) {}", ev.step, values.join("; "))
    }
}
