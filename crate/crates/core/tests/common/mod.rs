#![allow(dead_code)]

pub mod scoring_oracles;
pub mod minipy;
pub mod prompts;
pub mod props;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use weaver_core::llm::{LlmClient, LlmConfig, ScriptedBackend};
use weaver_core::orchestrator::{Engine, FixedClock, FixtureExecutor, RunError, RunOutcome, RunSettings, Subject};
use weaver_core::prompting::Templates;
use weaver_core::subject::{build_cdg, build_cfg, parse_unit, Cdg, Cfg, LineId, SourceUnit};
use weaver_core::trace::{ExecutionTrace, Outcome, TraceEvent};

pub const SCORING: &str = include_str!("../fixtures/scoring.py");

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn scoring() -> (SourceUnit, Cfg, Cdg) {
    let unit = parse_unit(SCORING, "scoring.py").unwrap();
    let cfg = build_cfg(&unit);
    let cdg = build_cdg(&cfg);
    (unit, cfg, cdg)
}

pub fn transcript() -> Vec<String> {
    let text = std::fs::read_to_string(fixtures().join("scoring_transcript.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn quick_llm(responses: Vec<String>, token_budget: u64) -> LlmClient {
    let config = LlmConfig { retry_base_ms: 0, token_budget, ..LlmConfig::default() };
    LlmClient::new(config, Box::new(ScriptedBackend::new(responses))).unwrap()
}

/// Runs the engine on the scoring fixture over scripted responses and the frozen traces.
pub fn run_scoring(
    responses: Vec<String>,
    settings: RunSettings,
    token_budget: u64,
    out: Option<&Path>,
) -> Result<RunOutcome, RunError> {
    run_scoring_with(responses, settings, token_budget, out, &fixtures().join("scoring_traces"), Duration::ZERO)
}

pub fn run_scoring_with(
    responses: Vec<String>,
    settings: RunSettings,
    token_budget: u64,
    out: Option<&Path>,
    traces: &Path,
    now: Duration,
) -> Result<RunOutcome, RunError> {
    let llm = quick_llm(responses, token_budget);
    let executor = FixtureExecutor::new(traces);
    let clock = FixedClock(now);
    let subjects = vec![Subject::new(parse_unit(SCORING, "scoring.py").unwrap())];
    let mut engine = Engine::new(settings, subjects, &llm, &executor, Templates::default(), &clock);
    if let Some(dir) = out {
        engine = engine.with_output(dir);
    }
    engine.run()
}

/// A trace over `file` from a list of (line, bindings).
pub fn trace_of(file: &str, events: &[(u32, &[(&str, &str)])]) -> ExecutionTrace {
    let events = events
        .iter()
        .enumerate()
        .map(|(i, (line, vars))| TraceEvent {
            step: i as u32 + 1,
            line: LineId::new(file, *line),
            bindings: vars.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
        })
        .collect();
    ExecutionTrace::new("t", events, Outcome::Passed)
}

/// The executable lines of the scoring fixture, by hand.
pub const SCORING_EXECUTABLE: [u32; 25] = [2, 3, 4, 6, 7, 8, 9, 10, 11, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 24, 25, 26, 27, 29, 31];
