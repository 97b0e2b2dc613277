//! Prompt templates, their instantiation, and extraction of test code from
//! model responses.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::retrieval::TestCase;
use crate::slicer::Slice;
use crate::subject::lexer::top_level_starts;
use crate::subject::{LineId, SourceUnit};

pub const TEST_PREFIX: &str = "test_weaver_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Seed,
    Generation,
    Regeneration,
    Repair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptResult {
    CoveredTarget,
    NewCoverage,
    NoProgress,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub phase: Phase,
    pub target: Option<LineId>,
    pub messages: Vec<Message>,
    pub response: String,
    pub extracted_test: Option<String>,
    pub result: PromptResult,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Regeneration prompt that used the generation template because no
    /// closest test existed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
    /// Ids of tests admitted to the suite from this prompt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub admitted: Vec<String>,
}

const FILES: [&str; 6] = [
    "generation.txt",
    "generation_function.txt",
    "regeneration.txt",
    "regeneration_function.txt",
    "repair.txt",
    "seed.txt",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub generation: String,
    pub generation_function: String,
    pub regeneration: String,
    pub regeneration_function: String,
    pub repair: String,
    pub seed: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            generation: include_str!("../templates/generation.txt").to_string(),
            generation_function: include_str!("../templates/generation_function.txt").to_string(),
            regeneration: include_str!("../templates/regeneration.txt").to_string(),
            regeneration_function: include_str!("../templates/regeneration_function.txt").to_string(),
            repair: include_str!("../templates/repair.txt").to_string(),
            seed: include_str!("../templates/seed.txt").to_string(),
        }
    }
}

impl Templates {
    /// Built-in templates with any same-named file in `dir` taking precedence.
    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::default();
        for name in FILES {
            let path = dir.join(name);
            if path.is_file() {
                let text = std::fs::read_to_string(&path)?;
                *t.slot(name) = text;
            }
        }
        Ok(t)
    }

    fn slot(&mut self, name: &str) -> &mut String {
        match name {
            "generation.txt" => &mut self.generation,
            "generation_function.txt" => &mut self.generation_function,
            "regeneration.txt" => &mut self.regeneration,
            "regeneration_function.txt" => &mut self.regeneration_function,
            "repair.txt" => &mut self.repair,
            _ => &mut self.seed,
        }
    }
}

/// Replaces each `{name}` occurrence of a known placeholder in one pass;
/// substituted text is never rescanned.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let map: BTreeMap<&str, &str> = values.iter().copied().collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').map(|close| (&after[..close], close)) {
            Some((name, close)) if map.contains_key(name) => {
                out.push_str(map[name]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Dotted import name of a subject file (`pkg/mod.py` -> `pkg.mod`).
pub fn module_name(path: &str) -> String {
    let p = path.trim_start_matches("./").trim_end_matches(".py");
    let p = p.strip_suffix("/__init__").unwrap_or(p);
    p.replace(['/', '\\'], ".")
}

/// `<line>: <source>` for the target line.
pub fn target_line_text(unit: &SourceUnit, target: &LineId) -> String {
    format!("{}: {}", target.line, unit.line_text(target.line).unwrap_or("").trim())
}

pub fn build_generation_prompt(
    templates: &Templates,
    unit: &SourceUnit,
    slice: &Slice,
    target: &LineId,
    class_name: &str,
    func_name: &str,
) -> Vec<Message> {
    debug_assert_eq!(&slice.target, target);
    let template = if class_name.is_empty() { &templates.generation_function } else { &templates.generation };
    let target_line = target_line_text(unit, target);
    let module = module_name(&unit.file);
    vec![Message::user(fill(
        template,
        &[
            ("class_name", class_name),
            ("func_name", func_name),
            ("code_slice", slice.rendered_text.trim_end()),
            ("target_line", &target_line),
            ("module_name", &module),
        ],
    ))]
}

/// Template 2. Returns `None` without a closest test; callers then fall back
/// to the generation prompt.
pub fn build_regeneration_prompt(
    templates: &Templates,
    unit: &SourceUnit,
    annotated_slice: &str,
    closest_test: Option<&TestCase>,
    target: &LineId,
    class_name: &str,
    func_name: &str,
) -> Option<Vec<Message>> {
    let closest = closest_test?;
    let template = if class_name.is_empty() { &templates.regeneration_function } else { &templates.regeneration };
    let target_line = target_line_text(unit, target);
    let module = module_name(&unit.file);
    Some(vec![Message::user(fill(
        template,
        &[
            ("class_name", class_name),
            ("func_name", func_name),
            ("target_line", &target_line),
            ("closest_test", closest.source.trim_end()),
            ("code_slice_with_exec_inlines", annotated_slice.trim_end()),
            ("module_name", &module),
        ],
    ))])
}

pub fn build_seed_prompt(templates: &Templates, unit: &SourceUnit, seed_count: usize) -> Vec<Message> {
    let count = seed_count.to_string();
    let module = module_name(&unit.file);
    vec![Message::user(fill(
        &templates.seed,
        &[("seed_count", &count), ("module_name", &module), ("code", unit.text.trim_end())],
    ))]
}

pub fn build_repair_prompt(templates: &Templates, unit: &SourceUnit, test_source: &str, error: &str) -> Vec<Message> {
    let module = module_name(&unit.file);
    vec![Message::user(fill(
        &templates.repair,
        &[("module_name", &module), ("test_source", test_source.trim_end()), ("error", error.trim_end())],
    ))]
}

/// Test code from a model response: the `<answer>` section (its fenced
/// block when it has one), else the last fenced block. The result must
/// define at least one function named with `prefix`.
pub fn extract_test(response: &str, prefix: &str) -> Option<String> {
    let code = match answer_section(response) {
        Some(answer) => fenced_blocks(answer).pop().unwrap_or_else(|| answer.trim_matches('\n')),
        None => fenced_blocks(response).pop()?,
    };
    defines_test(code, prefix).then(|| code.to_string())
}

fn answer_section(text: &str) -> Option<&str> {
    let start = text.find("<answer>")? + "<answer>".len();
    let end = text[start..].find("</answer>").map_or(text.len(), |e| start + e);
    Some(&text[start..end])
}

/// Contents of every complete fenced block, in order.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut open: Option<usize> = None;
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let is_fence = line.trim_start().starts_with("```");
        match open {
            None if is_fence => open = Some(pos + line.len()),
            Some(start) if is_fence => {
                let end = pos.saturating_sub(1).max(start);
                blocks.push(&text[start..end]);
                open = None;
            }
            _ => {}
        }
        pos += line.len();
    }
    blocks
}

fn defines_test(code: &str, prefix: &str) -> bool {
    code.lines().any(|l| {
        let t = l.trim_start();
        let t = t.strip_prefix("async ").unwrap_or(t);
        t.strip_prefix("def ").is_some_and(|rest| rest.trim_start().starts_with(prefix))
    })
}

/// Splits a multi-test module into one module per test function, each
/// carrying every top-level statement that is not itself a test.
pub fn split_tests(source: &str, prefix: &str) -> Vec<String> {
    let lines: Vec<&str> = source.split_inclusive('\n').collect();
    let Some(starts) = top_level_starts(source) else { return vec![source.to_string()] };
    // Segments begin at top-level statements; decorators stick to what follows.
    let mut bounds: Vec<usize> = Vec::new();
    for (i, &s) in starts.iter().enumerate() {
        let prev_is_decorator = i > 0 && lines[starts[i - 1] as usize - 1].trim_start().starts_with('@');
        if !prev_is_decorator {
            bounds.push(s as usize - 1);
        }
    }
    if bounds.first() != Some(&0) {
        bounds.insert(0, 0);
    }
    let mut shared = Vec::new();
    let mut tests = Vec::new();
    for (i, &b) in bounds.iter().enumerate() {
        let end = bounds.get(i + 1).copied().unwrap_or(lines.len());
        let seg: String = lines[b..end].concat();
        let is_test = lines[b..end].iter().find(|l| !l.trim_start().starts_with('@')).is_some_and(|l| defines_test(l, prefix))
            && lines[b].chars().next().is_some_and(|c| !c.is_whitespace());
        if is_test {
            tests.push(seg);
        } else {
            shared.push(seg);
        }
    }
    if tests.len() <= 1 {
        return if tests.is_empty() { Vec::new() } else { vec![source.to_string()] };
    }
    tests
        .into_iter()
        .map(|seg| {
            let mut s: String = shared.concat();
            if !s.is_empty() && !s.ends_with("\n\n") {
                s.push('\n');
            }
            s.push_str(&seg);
            s
        })
        .collect()
}

/// Loads templates from `dir` when given, else the built-in set.
pub fn templates_from(dir: Option<&Path>) -> std::io::Result<Templates> {
    match dir {
        Some(d) => Templates::load(d),
        None => Ok(Templates::default()),
    }
}
