//! Test suites and closest-test retrieval by conditional coverage proximity.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subject::{Cdg, Control, LineId};
use crate::trace::{CoverageError, CoverageMap, ExecutionTrace, Universe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Valid,
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub id: String,
    pub source: String,
    pub status: TestStatus,
    pub trace: Option<ExecutionTrace>,
}

impl TestCase {
    pub fn valid(id: impl Into<String>, source: impl Into<String>, trace: ExecutionTrace) -> Self {
        Self { id: id.into(), source: source.into(), status: TestStatus::Valid, trace: Some(trace) }
    }

    pub fn executes(&self, line: &LineId) -> bool {
        self.trace.as_ref().is_some_and(|t| t.executed_lines.contains(line))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SuiteError {
    #[error("duplicate test id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

/// Tests in insertion order with their pooled coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSuite {
    tests: Vec<TestCase>,
    ids: BTreeSet<String>,
    coverage: CoverageMap,
}

impl TestSuite {
    pub fn new(universe: Arc<Universe>) -> Self {
        Self { tests: Vec::new(), ids: BTreeSet::new(), coverage: CoverageMap::empty(universe) }
    }

    /// Appends a test; `coverage` is that test's own coverage map.
    pub fn push(&mut self, test: TestCase, coverage: &CoverageMap) -> Result<(), SuiteError> {
        if self.ids.contains(&test.id) {
            return Err(SuiteError::DuplicateId(test.id));
        }
        if test.status == TestStatus::Valid {
            self.coverage.merge_from(coverage)?;
        }
        self.ids.insert(test.id.clone());
        self.tests.push(test);
        Ok(())
    }

    pub fn tests(&self) -> &[TestCase] {
        &self.tests
    }

    pub fn valid_tests(&self) -> impl Iterator<Item = &TestCase> {
        self.tests.iter().filter(|t| t.status == TestStatus::Valid)
    }

    pub fn get(&self, id: &str) -> Option<&TestCase> {
        self.tests.iter().find(|t| t.id == id)
    }

    pub fn coverage(&self) -> &CoverageMap {
        &self.coverage
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }
}

/// Closest distance between the target and any governing condition the test
/// executed, or `None` when it executed none of them.
pub fn closeness(test: &TestCase, target: &LineId, cdg: &Cdg) -> Option<u32> {
    if target.file != cdg.file {
        return None;
    }
    let trace = test.trace.as_ref()?;
    cdg.controls(target.line)
        .iter()
        .filter(|c| trace.executed_lines.contains(&LineId::new(target.file.clone(), c.line)))
        .map(|c| c.line.abs_diff(target.line))
        .min()
}

/// The valid suite member whose execution reaches a governing condition of
/// `target` nearest to it, with that distance.
pub fn find_closest_test<'a>(suite: &'a TestSuite, target: &LineId, cdg: &Cdg) -> Option<(&'a TestCase, u32)> {
    if target.file != cdg.file {
        return None;
    }
    let conds = cdg.controls(target.line);
    let tests: Vec<&TestCase> = suite.valid_tests().collect();
    let i = closest_index(conds, target.line, tests.iter().map(|t| {
        move |line: u32| t.executes(&LineId::new(target.file.clone(), line))
    }))?;
    Some((tests[i.0], i.1))
}

/// Closest-test selection over abstract executions: for each candidate in order, the
/// first condition of `conds` (proximity order) it executed gives its
/// distance; a strictly smaller distance replaces the current best.
pub fn closest_index<F>(conds: &[Control], target_line: u32, execs: impl IntoIterator<Item = F>) -> Option<(usize, u32)>
where
    F: Fn(u32) -> bool,
{
    let mut best: Option<(usize, u32)> = None;
    for (i, executed) in execs.into_iter().enumerate() {
        for c in conds {
            if executed(c.line) {
                let d = c.line.abs_diff(target_line);
                if best.is_none_or(|(_, m)| d < m) {
                    best = Some((i, d));
                }
                break;
            }
        }
    }
    best
}
