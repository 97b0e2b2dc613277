//! Execution traces as emitted by the test shim, branch outcomes derived
//! from them, and coverage maps.

mod coverage;

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};
use thiserror::Error;

use crate::subject::{Cfg, LineId, Node};

pub use coverage::{coverage_metrics, merge, CoverageError, CoverageMap, CoverageMetrics, Universe};

pub const TRACE_VERSION: u64 = 1;
pub const MAX_VALUE_CHARS: usize = 60;
pub const MAX_COLLECTION_ITEMS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed trace at {position}: {reason}")]
pub struct TraceFormatError {
    pub position: String,
    pub reason: String,
}

fn format_err(position: impl Into<String>, reason: impl Into<String>) -> TraceFormatError {
    TraceFormatError { position: position.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    /// 1-based execution step.
    pub step: u32,
    pub line: LineId,
    /// Post-state values of the variables of interest, already rendered.
    pub bindings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    Failed(String),
    Error(String),
    Timeout,
}

impl Outcome {
    pub fn status(&self) -> &'static str {
        match self {
            Outcome::Passed => "passed",
            Outcome::Failed(_) => "failed",
            Outcome::Error(_) => "error",
            Outcome::Timeout => "timeout",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Outcome::Failed(m) | Outcome::Error(m) => m,
            Outcome::Passed | Outcome::Timeout => "",
        }
    }

    /// Passed or failed on an assertion: the test ran to completion.
    pub fn executed(&self) -> bool {
        matches!(self, Outcome::Passed | Outcome::Failed(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub test_id: String,
    pub events: Vec<TraceEvent>,
    pub executed_lines: BTreeSet<LineId>,
    pub outcome: Outcome,
}

impl ExecutionTrace {
    pub fn new(test_id: impl Into<String>, events: Vec<TraceEvent>, outcome: Outcome) -> Self {
        let executed_lines = events.iter().map(|e| e.line.clone()).collect();
        Self { test_id: test_id.into(), events, executed_lines, outcome }
    }

    /// Lines executed in `file`.
    pub fn lines_in<'a>(&'a self, file: &'a str) -> impl Iterator<Item = u32> + 'a {
        self.executed_lines.iter().filter(move |l| l.file == file).map(|l| l.line)
    }

    pub fn to_json(&self) -> Value {
        let events: Vec<Value> = self
            .events
            .iter()
            .map(|e| json!({"k": e.step, "file": e.line.file, "line": e.line.line, "vars": e.bindings}))
            .collect();
        json!({
            "v": TRACE_VERSION,
            "test_id": self.test_id,
            "outcome": {"status": self.outcome.status(), "message": self.outcome.message()},
            "events": events,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("trace serializes")
    }
}

/// Parses one schema-v1 trace document.
pub fn parse_trace(raw: &str) -> Result<ExecutionTrace, TraceFormatError> {
    let doc: Value = serde_json::from_str(raw)
        .map_err(|e| format_err(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    trace_from_value(&doc)
}

pub fn trace_from_value(doc: &Value) -> Result<ExecutionTrace, TraceFormatError> {
    let obj = doc.as_object().ok_or_else(|| format_err("$", "document is not an object"))?;
    match obj.get("v") {
        Some(v) if v.as_u64() == Some(TRACE_VERSION) => {}
        Some(v) => return Err(format_err("$.v", format!("unsupported version {v}"))),
        None => return Err(format_err("$.v", "missing version field")),
    }
    let test_id = obj
        .get("test_id")
        .and_then(Value::as_str)
        .ok_or_else(|| format_err("$.test_id", "missing or non-string test_id"))?;

    let outcome = obj.get("outcome").and_then(Value::as_object).ok_or_else(|| format_err("$.outcome", "missing outcome"))?;
    let message = match outcome.get("message") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(format_err("$.outcome.message", "message is not a string")),
    };
    let outcome = match outcome.get("status").and_then(Value::as_str) {
        Some("passed") => Outcome::Passed,
        Some("failed") => Outcome::Failed(message),
        Some("error") => Outcome::Error(message),
        Some("timeout") => Outcome::Timeout,
        Some(other) => return Err(format_err("$.outcome.status", format!("unknown status {other:?}"))),
        None => return Err(format_err("$.outcome.status", "missing status")),
    };

    let raw_events =
        obj.get("events").and_then(Value::as_array).ok_or_else(|| format_err("$.events", "missing events array"))?;
    let mut events = Vec::with_capacity(raw_events.len());
    let mut last_step = 0u64;
    for (i, ev) in raw_events.iter().enumerate() {
        let at = |field: &str| format!("$.events[{i}].{field}");
        let ev = ev.as_object().ok_or_else(|| format_err(format!("$.events[{i}]"), "event is not an object"))?;
        let step = ev.get("k").and_then(Value::as_u64).ok_or_else(|| format_err(at("k"), "missing step index"))?;
        if step <= last_step {
            return Err(format_err(at("k"), format!("step {step} does not follow {last_step}")));
        }
        last_step = step;
        let file = ev.get("file").and_then(Value::as_str).ok_or_else(|| format_err(at("file"), "missing file"))?;
        let line = ev
            .get("line")
            .and_then(Value::as_u64)
            .filter(|&l| l >= 1 && l <= u32::MAX as u64)
            .ok_or_else(|| format_err(at("line"), "missing or invalid line"))?;
        let mut bindings = BTreeMap::new();
        match ev.get("vars") {
            None => {}
            Some(Value::Object(vars)) => {
                for (name, value) in vars {
                    if !is_identifier(name) {
                        return Err(format_err(at("vars"), format!("{name:?} is not an identifier")));
                    }
                    let value = value
                        .as_str()
                        .ok_or_else(|| format_err(format!("{}.{name}", at("vars")), "value is not a string"))?;
                    bindings.insert(name.clone(), value.to_string());
                }
            }
            Some(_) => return Err(format_err(at("vars"), "vars is not an object")),
        }
        events.push(TraceEvent {
            step: u32::try_from(step).map_err(|_| format_err(at("k"), "step out of range"))?,
            line: LineId::new(file, line as u32),
            bindings,
        });
    }
    Ok(ExecutionTrace::new(test_id, events, outcome))
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c == '_' || c.is_alphabetic()) && chars.all(|c| c == '_' || c.is_alphanumeric())
}

/// Truncates a rendered value to the prompt-size limit.
pub fn truncate_value(value: &str) -> String {
    if value.chars().count() <= MAX_VALUE_CHARS {
        value.to_string()
    } else {
        let mut s: String = value.chars().take(MAX_VALUE_CHARS).collect();
        s.push('…');
        s
    }
}

/// Renders a collection from its already-rendered elements, keeping the
/// first few, then truncates the result.
pub fn render_collection<I>(open: &str, close: &str, items: I) -> String
where
    I: IntoIterator<Item = String>,
{
    let mut items = items.into_iter();
    let mut parts: Vec<String> = items.by_ref().take(MAX_COLLECTION_ITEMS).collect();
    if items.next().is_some() {
        parts.push("…".to_string());
    }
    truncate_value(&format!("{open}{}{close}", parts.join(", ")))
}

/// Decision outcomes exercised by a trace, from consecutive line events and
/// the CFG edges between them.
///
/// When the next event of the decision's own scope is not one of its
/// successors (or there is none), the scope was left through the decision's
/// edge to the exit node, if it has exactly such a polar edge.
pub fn branch_outcomes(trace: &ExecutionTrace, cfg: &Cfg) -> BTreeSet<(LineId, bool)> {
    let mut out = BTreeSet::new();
    let events: Vec<u32> = trace.events.iter().filter(|e| e.line.file == cfg.file).map(|e| e.line.line).collect();
    for (i, &line) in events.iter().enumerate() {
        let succ = cfg.successors(Node::Line(line));
        if !succ.iter().any(|(_, k)| k.polarity().is_some()) {
            continue;
        }
        let Some(scope) = cfg.scope_of(line).map(|s| s.id) else { continue };
        let next_same_scope = events[i + 1..].iter().find(|&&l| cfg.scope_of(l).map(|s| s.id) == Some(scope));
        let direct = events.get(i + 1).and_then(|&n| succ.iter().find(|(m, _)| *m == Node::Line(n)));
        let via_scope = next_same_scope.and_then(|&n| succ.iter().find(|(m, _)| *m == Node::Line(n)));
        let edge = direct.or(via_scope).or_else(|| {
            let exits: Vec<_> = succ.iter().filter(|(m, k)| matches!(m, Node::Exit(_)) && k.polarity().is_some()).collect();
            (exits.len() == 1).then(|| exits[0])
        });
        if let Some(p) = edge.and_then(|(_, k)| k.polarity()) {
            out.insert((LineId::new(cfg.file.clone(), line), p));
        }
    }
    out
}
