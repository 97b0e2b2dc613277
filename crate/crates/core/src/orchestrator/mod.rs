//! The generation loop: seed tests, slice-guided generation for each
//! uncovered line, then regeneration with the closest test's execution
//! in-lined into the slice.

mod config;
mod executor;
mod log;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inliner::annotate_slice;
use crate::llm::{cost, Completion, LlmClient, LlmError};
use crate::prompting::{
    build_generation_prompt, build_regeneration_prompt, build_repair_prompt, build_seed_prompt, extract_test, module_name,
    split_tests, Message, Phase, PromptRecord, PromptResult, Templates, TEST_PREFIX,
};
use crate::retrieval::{find_closest_test, TestCase, TestSuite};
use crate::slicer::{backward_slice, Slice};
use crate::subject::{build_cdg, build_cfg, parse_unit, Cdg, Cfg, LineId, ScopeKind, SourceUnit, SubjectError};
use crate::trace::{parse_trace, CoverageMap, ExecutionTrace, Outcome, Universe};

pub use config::{ExecutorConfig, ProjectConfig, RunConfig, RunSettings};
pub use executor::{test_function_name, ExecError, FixtureExecutor, ShimExecutor, TestExecutor};
pub use log::{saturation_check, Clock, CoverageSnapshot, FixedClock, PhaseBoundary, RunLog, RunStatus, SystemClock, Totals};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Subject(#[from] SubjectError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("cannot resume: {0}")]
    Resume(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// A parsed subject file with its control-flow and control-dependence graphs.
pub struct Subject {
    pub unit: SourceUnit,
    pub cfg: Cfg,
    pub cdg: Cdg,
}

impl Subject {
    pub fn new(unit: SourceUnit) -> Self {
        let cfg = build_cfg(&unit);
        let cdg = build_cdg(&cfg);
        Self { unit, cfg, cdg }
    }

    /// Class and function names for the scope holding `line`.
    pub fn names_for(&self, line: u32) -> (String, String) {
        match self.cfg.scope_of(line) {
            Some(s) if s.kind == ScopeKind::Function => (s.class_name.clone().unwrap_or_default(), s.name.clone()),
            _ => (String::new(), module_name(&self.unit.file)),
        }
    }
}

/// Parses every configured subject file; files outside the supported
/// subset are skipped with a warning.
pub fn load_subjects(config: &RunConfig) -> Result<Vec<Subject>, RunError> {
    let mut out = Vec::new();
    for rel in config.subject_files()? {
        let path = config.project.root.join(&rel);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        match parse_unit(&text, &rel) {
            Ok(unit) => out.push(Subject::new(unit)),
            Err(e) => ::log::warn!("skipping {rel}: {e}"),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub log: RunLog,
    pub suite: TestSuite,
}

/// Why the loop stopped early.
enum Halt {
    Budget(RunStatus),
    Fatal(RunError),
}

impl<E: Into<RunError>> From<E> for Halt {
    fn from(e: E) -> Self {
        Halt::Fatal(e.into())
    }
}

/// A runnable test produced by validation.
struct Validated {
    source: String,
    trace: ExecutionTrace,
    coverage: CoverageMap,
}

struct Validation {
    valid: Option<Validated>,
    /// Repair record whose output became the valid test.
    fixed_by: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SuiteEntry {
    id: String,
    file: String,
}

pub struct Engine<'a> {
    settings: RunSettings,
    subjects: Vec<Subject>,
    universe: Arc<Universe>,
    llm: &'a LlmClient,
    executor: &'a dyn TestExecutor,
    templates: Templates,
    clock: &'a dyn Clock,
    out_dir: Option<PathBuf>,
    suite: TestSuite,
    entries: Vec<SuiteEntry>,
    log: RunLog,
    candidates: usize,
}

impl<'a> Engine<'a> {
    pub fn new(
        settings: RunSettings,
        subjects: Vec<Subject>,
        llm: &'a LlmClient,
        executor: &'a dyn TestExecutor,
        templates: Templates,
        clock: &'a dyn Clock,
    ) -> Self {
        let universe = Arc::new(Universe::from_units(subjects.iter().map(|s| &s.unit)));
        let suite = TestSuite::new(universe.clone());
        Self {
            settings,
            subjects,
            universe,
            llm,
            executor,
            templates,
            clock,
            out_dir: None,
            suite,
            entries: Vec::new(),
            log: RunLog::default(),
            candidates: 0,
        }
    }

    /// Persists tests, traces and the run log under `dir` as the run goes.
    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    /// Reloads a persisted run from `dir`; `run` then continues it.
    pub fn resume(&mut self, dir: &Path) -> Result<(), RunError> {
        let (log, tests) = load_run(dir)?;
        for (entry, test) in tests {
            let coverage = self.coverage_of(test.trace.as_ref().expect("loaded tests carry traces"));
            self.suite.push(test, &coverage).map_err(|e| RunError::Resume(e.to_string()))?;
            self.entries.push(entry);
        }
        self.llm.preload_usage(log.totals.tokens_in, log.totals.tokens_out);
        self.log = log;
        if self.log.status != RunStatus::Completed {
            self.log.status = RunStatus::Running;
        }
        self.out_dir = Some(dir.to_path_buf());
        Ok(())
    }

    pub fn suite(&self) -> &TestSuite {
        &self.suite
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn run(mut self) -> Result<RunOutcome, RunError> {
        if self.log.status == RunStatus::Completed {
            return Ok(RunOutcome { log: self.log, suite: self.suite });
        }
        if self.log.records.is_empty() && self.log.phases.is_empty() {
            self.log.baseline = self.snapshot();
        }
        for phase in [Phase::Seed, Phase::Generation, Phase::Regeneration] {
            if self.log.phase(phase).is_some() {
                continue;
            }
            let first = self.log.records.iter().position(|r| r.phase == phase).unwrap_or(self.log.records.len());
            let result = match phase {
                Phase::Seed => self.seed_phase(),
                Phase::Generation => self.generation_phase(),
                _ => self.regeneration_phase(),
            };
            match result {
                Ok(()) => {}
                Err(Halt::Budget(status)) => {
                    ::log::info!("stopping early: {status:?}");
                    self.log.status = status;
                    return self.finish();
                }
                Err(Halt::Fatal(e)) => {
                    self.update_totals();
                    let _ = self.persist_log();
                    return Err(e);
                }
            }
            let boundary = PhaseBoundary {
                phase,
                first_prompt: first,
                end_prompt: self.log.records.len(),
                coverage: self.snapshot(),
            };
            self.log.phases.push(boundary);
            self.persist_log()?;
        }
        self.log.status = RunStatus::Completed;
        self.finish()
    }

    fn finish(mut self) -> Result<RunOutcome, RunError> {
        self.log.unachieved = self.suite.coverage().uncovered_lines().cloned().collect();
        self.update_totals();
        self.persist_log()?;
        Ok(RunOutcome { log: self.log, suite: self.suite })
    }

    fn seed_phase(&mut self) -> Result<(), Halt> {
        let done = self.log.records.iter().filter(|r| r.phase == Phase::Seed).count();
        for idx in done..self.subjects.len() {
            let messages = build_seed_prompt(&self.templates, &self.subjects[idx].unit, self.settings.seed_count);
            let completion = self.ask(&messages)?;
            let extracted = extract_test(&completion.text, TEST_PREFIX);
            let mut candidates = extracted.as_deref().map(|c| split_tests(c, TEST_PREFIX)).unwrap_or_default();
            candidates.truncate(self.settings.seed_count);
            let rec = self.push_record(Phase::Seed, None, messages, &completion, extracted, false);
            let before = self.snapshot();
            for candidate in candidates {
                let v = self.run_and_validate(candidate, idx, None)?;
                if let Some(valid) = v.valid {
                    let gained = self.suite.coverage().gain_over(&valid.coverage).0 > 0;
                    let id = self.admit(valid)?;
                    self.log.records[rec].admitted.push(id);
                    if let Some(j) = v.fixed_by {
                        self.log.records[j].result = if gained { PromptResult::NewCoverage } else { PromptResult::NoProgress };
                    }
                }
            }
            self.log.records[rec].result = if self.log.records[rec].admitted.is_empty() {
                PromptResult::Invalid
            } else if self.snapshot().covered_lines > before.covered_lines {
                PromptResult::NewCoverage
            } else {
                PromptResult::NoProgress
            };
            self.persist_log()?;
        }
        Ok(())
    }

    fn generation_phase(&mut self) -> Result<(), Halt> {
        let worklist: Vec<LineId> = self.suite.coverage().uncovered_lines().cloned().collect();
        for target in worklist {
            let Some((idx, slice, used)) = self.prepare(&target, Phase::Generation, self.settings.gen_retries_per_line) else {
                continue;
            };
            let (class_name, func_name) = self.subjects[idx].names_for(target.line);
            for n in used..self.settings.gen_retries_per_line {
                let unit = &self.subjects[idx].unit;
                let messages = build_generation_prompt(&self.templates, unit, &slice, &target, &class_name, &func_name);
                let result = self.attempt(Phase::Generation, &target, idx, messages, false)?;
                if result == PromptResult::CoveredTarget || self.saturated(n + 1 - used) {
                    break;
                }
            }
        }
        Ok(())
    }

    fn regeneration_phase(&mut self) -> Result<(), Halt> {
        let worklist: Vec<LineId> = self.suite.coverage().uncovered_lines().cloned().collect();
        for target in worklist {
            let Some((idx, slice, used)) = self.prepare(&target, Phase::Regeneration, self.settings.regen_retries_per_line)
            else {
                continue;
            };
            let (class_name, func_name) = self.subjects[idx].names_for(target.line);
            for n in used..self.settings.regen_retries_per_line {
                let subject = &self.subjects[idx];
                let closest = find_closest_test(&self.suite, &target, &subject.cdg).and_then(|(test, _)| {
                    let annotated = annotate_slice(&subject.unit, &slice, test.trace.as_ref()?)
                        .map_err(|e| ::log::warn!("cannot in-line {} on {target}: {e}", test.id))
                        .ok()?;
                    Some((test, annotated))
                });
                let (messages, fallback) = match closest {
                    Some((test, annotated)) => (
                        build_regeneration_prompt(
                            &self.templates,
                            &subject.unit,
                            &annotated,
                            Some(test),
                            &target,
                            &class_name,
                            &func_name,
                        )
                        .expect("closest test present"),
                        false,
                    ),
                    None => {
                        ::log::info!("no closest test for {target}; falling back to the generation prompt");
                        let m = build_generation_prompt(&self.templates, &subject.unit, &slice, &target, &class_name, &func_name);
                        (m, true)
                    }
                };
                let result = self.attempt(Phase::Regeneration, &target, idx, messages, fallback)?;
                if result == PromptResult::CoveredTarget || self.saturated(n + 1 - used) {
                    break;
                }
            }
        }
        Ok(())
    }

    /// Subject index, slice and attempts already spent for a still-uncovered
    /// target; `None` when the line needs no (more) work.
    fn prepare(&self, target: &LineId, phase: Phase, limit: usize) -> Option<(usize, Slice, usize)> {
        if self.suite.coverage().covers(target) {
            return None;
        }
        let used = self.log.attempts(phase, target);
        if used >= limit {
            return None;
        }
        let idx = self.subjects.iter().position(|s| s.unit.file == target.file)?;
        let s = &self.subjects[idx];
        match backward_slice(&s.unit, &s.cfg, &s.cdg, target) {
            Ok(slice) => Some((idx, slice, used)),
            Err(e) => {
                ::log::warn!("skipping {target}: {e}");
                None
            }
        }
    }

    fn saturated(&self, attempts_on_line: usize) -> bool {
        self.settings.saturation_stop && attempts_on_line >= 2 && saturation_check(&self.log)
    }

    /// One targeted prompt: ask, extract, validate, and admit the test when
    /// it covers the target or adds any coverage.
    fn attempt(
        &mut self,
        phase: Phase,
        target: &LineId,
        idx: usize,
        messages: Vec<Message>,
        fallback: bool,
    ) -> Result<PromptResult, Halt> {
        let completion = self.ask(&messages)?;
        let extracted = extract_test(&completion.text, TEST_PREFIX);
        let rec = self.push_record(phase, Some(target.clone()), messages, &completion, extracted.clone(), fallback);
        let mut result = PromptResult::Invalid;
        if let Some(source) = extracted {
            let v = self.run_and_validate(source, idx, Some(target))?;
            if let Some(valid) = v.valid {
                let (lines, branches) = self.suite.coverage().gain_over(&valid.coverage);
                let covers = valid.coverage.covers(target);
                result = if covers {
                    PromptResult::CoveredTarget
                } else if lines > 0 {
                    PromptResult::NewCoverage
                } else {
                    PromptResult::NoProgress
                };
                if covers || lines > 0 || branches > 0 {
                    let id = self.admit(valid)?;
                    self.log.records[rec].admitted.push(id);
                }
                if let Some(j) = v.fixed_by {
                    self.log.records[j].result = result;
                }
            }
        }
        self.log.records[rec].result = result;
        self.persist_log()?;
        Ok(result)
    }

    /// Executes a candidate; tests that error out get repair prompts until
    /// one runs or the repair budget is spent.
    fn run_and_validate(&mut self, source: String, idx: usize, target: Option<&LineId>) -> Result<Validation, Halt> {
        let mut source = source;
        let mut fixed_by = None;
        for attempt in 0..=self.settings.repair_attempts {
            let cid = format!("c{:05}", self.candidates);
            self.candidates += 1;
            let unit = &self.subjects[idx].unit;
            let trace = match self.executor.execute(&cid, &source, unit, self.settings.test_timeout()) {
                Ok(t) => t,
                Err(e @ (ExecError::ShimUnavailable(_) | ExecError::MissingFixture(_))) => return Err(e.into()),
                Err(e) => ExecutionTrace::new(cid.clone(), Vec::new(), Outcome::Error(e.to_string())),
            };
            if trace.outcome.executed() {
                let coverage = self.coverage_of(&trace);
                return Ok(Validation { valid: Some(Validated { source, trace, coverage }), fixed_by });
            }
            if attempt == self.settings.repair_attempts {
                break;
            }
            let error = match &trace.outcome {
                Outcome::Timeout => format!("the test timed out after {} seconds", self.settings.test_timeout_secs),
                other => other.message().to_string(),
            };
            let messages = build_repair_prompt(&self.templates, &self.subjects[idx].unit, &source, &error);
            let completion = self.ask(&messages)?;
            let extracted = extract_test(&completion.text, TEST_PREFIX);
            let rec = self.push_record(Phase::Repair, target.cloned(), messages, &completion, extracted.clone(), false);
            if let Some(fixed) = extracted {
                source = fixed;
                fixed_by = Some(rec);
            }
        }
        Ok(Validation { valid: None, fixed_by: None })
    }

    fn ask(&self, messages: &[Message]) -> Result<Completion, Halt> {
        if self.clock.elapsed() >= self.settings.wall_clock_budget() {
            return Err(Halt::Budget(RunStatus::WallClockExceeded));
        }
        match self.llm.complete(messages) {
            Ok(c) => Ok(c),
            Err(LlmError::BudgetExhausted) => Err(Halt::Budget(RunStatus::TokenBudgetExhausted)),
            Err(e) => Err(e.into()),
        }
    }

    fn push_record(
        &mut self,
        phase: Phase,
        target: Option<LineId>,
        messages: Vec<Message>,
        completion: &Completion,
        extracted: Option<String>,
        fallback: bool,
    ) -> usize {
        let record = PromptRecord {
            phase,
            target,
            messages,
            response: completion.text.clone(),
            extracted_test: extracted,
            result: PromptResult::Invalid,
            tokens_in: completion.tokens_in,
            tokens_out: completion.tokens_out,
            fallback,
            admitted: Vec::new(),
        };
        let snap = self.snapshot();
        self.log.push(record, snap);
        let now = self.clock.elapsed().as_secs_f64();
        self.log.totals.first_prompt_secs.get_or_insert(now);
        self.log.totals.last_prompt_secs = Some(now);
        self.update_totals();
        self.log.records.len() - 1
    }

    fn admit(&mut self, valid: Validated) -> Result<String, Halt> {
        let id = format!("t{:04}", self.suite.len() + 1);
        let mut trace = valid.trace;
        trace.test_id = id.clone();
        let file = trace
            .executed_lines
            .iter()
            .map(|l| l.file.clone())
            .find(|f| self.subjects.iter().any(|s| &s.unit.file == f))
            .unwrap_or_default();
        let test = TestCase::valid(id.clone(), valid.source, trace);
        self.suite.push(test, &valid.coverage).map_err(|e| RunError::Resume(e.to_string()))?;
        self.entries.push(SuiteEntry { id: id.clone(), file });
        if let Some(last) = self.log.progression.last_mut() {
            *last = CoverageSnapshot::of(self.suite.coverage());
        }
        self.persist_test(&id)?;
        Ok(id)
    }

    fn coverage_of(&self, trace: &ExecutionTrace) -> CoverageMap {
        let cfgs: Vec<&Cfg> = self.subjects.iter().map(|s| &s.cfg).collect();
        CoverageMap::from_trace(self.universe.clone(), trace, &cfgs)
    }

    fn snapshot(&self) -> CoverageSnapshot {
        CoverageSnapshot::of(self.suite.coverage())
    }

    fn update_totals(&mut self) {
        let (_, tokens_in, tokens_out) = self.llm.usage();
        let t = &mut self.log.totals;
        t.prompts = self.log.records.len();
        t.tokens_in = tokens_in;
        t.tokens_out = tokens_out;
        t.cost = cost(tokens_in, tokens_out, self.llm.config());
        t.wall_secs = self.clock.elapsed().as_secs_f64();
    }

    fn persist_log(&self) -> Result<(), RunError> {
        let Some(dir) = &self.out_dir else { return Ok(()) };
        let text = serde_json::to_string_pretty(&self.log).expect("run log serializes");
        write_atomic(&dir.join("runlog.json"), &text)
    }

    fn persist_test(&self, id: &str) -> Result<(), RunError> {
        let Some(dir) = &self.out_dir else { return Ok(()) };
        let test = self.suite.get(id).expect("admitted test");
        write_atomic(&dir.join("tests").join(format!("{id}.py")), &test.source)?;
        let trace = test.trace.as_ref().expect("admitted tests carry traces");
        write_atomic(&dir.join("traces").join(format!("{id}.json")), &trace.to_json_string())?;
        let index = serde_json::to_string_pretty(&self.entries).expect("suite index serializes");
        write_atomic(&dir.join("suite.json"), &index)
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Reads a run directory: the run log and the suite in admission order.
fn load_run(dir: &Path) -> Result<(RunLog, Vec<(SuiteEntry, TestCase)>), RunError> {
    let log_path = dir.join("runlog.json");
    let text = std::fs::read_to_string(&log_path).map_err(|e| io_err(&log_path, e))?;
    let log: RunLog = serde_json::from_str(&text).map_err(|e| RunError::Resume(format!("{}: {e}", log_path.display())))?;
    let index_path = dir.join("suite.json");
    let entries: Vec<SuiteEntry> = match std::fs::read_to_string(&index_path) {
        Ok(t) => serde_json::from_str(&t).map_err(|e| RunError::Resume(format!("{}: {e}", index_path.display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io_err(&index_path, e)),
    };
    let mut tests = Vec::new();
    for entry in entries {
        let test = load_test(dir, &entry.id)?;
        tests.push((entry, test));
    }
    Ok((log, tests))
}

/// Loads one persisted test and its trace.
pub fn load_test(dir: &Path, id: &str) -> Result<TestCase, RunError> {
    let src_path = dir.join("tests").join(format!("{id}.py"));
    let source = std::fs::read_to_string(&src_path).map_err(|e| io_err(&src_path, e))?;
    let trace_path = dir.join("traces").join(format!("{id}.json"));
    let raw = std::fs::read_to_string(&trace_path).map_err(|e| io_err(&trace_path, e))?;
    let trace = parse_trace(&raw).map_err(|e| RunError::Resume(format!("{}: {e}", trace_path.display())))?;
    Ok(TestCase::valid(id, source, trace))
}

/// Loads the persisted suite of a run directory, in admission order.
pub fn load_suite(dir: &Path, universe: Arc<Universe>, cfgs: &[&Cfg]) -> Result<TestSuite, RunError> {
    let (_, tests) = load_run(dir)?;
    let mut suite = TestSuite::new(universe.clone());
    for (_, test) in tests {
        let map = CoverageMap::from_trace(universe.clone(), test.trace.as_ref().expect("loaded tests carry traces"), cfgs);
        suite.push(test, &map).map_err(|e| RunError::Resume(e.to_string()))?;
    }
    Ok(suite)
}

/// Reads `runlog.json` from a run directory.
pub fn load_log(dir: &Path) -> Result<RunLog, RunError> {
    let path = dir.join("runlog.json");
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| RunError::Resume(format!("{}: {e}", path.display())))
}
