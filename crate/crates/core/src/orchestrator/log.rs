use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::prompting::{Phase, PromptRecord};
use crate::subject::LineId;
use crate::trace::{CoverageMap, CoverageMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoverageSnapshot {
    pub covered_lines: usize,
    pub total_lines: usize,
    pub covered_branches: usize,
    pub total_branches: usize,
}

impl CoverageSnapshot {
    pub fn of(map: &CoverageMap) -> Self {
        let (total_lines, total_branches) = map.totals();
        Self {
            covered_lines: map.covered_lines().len(),
            total_lines,
            covered_branches: map.covered_branches().len(),
            total_branches,
        }
    }

    pub fn metrics(&self) -> CoverageMetrics {
        CoverageMetrics::from_counts(
            (self.covered_lines, self.total_lines),
            (self.covered_branches, self.total_branches),
        )
    }

    /// Every count at least as large as in `other`.
    pub fn dominates(&self, other: &CoverageSnapshot) -> bool {
        self.covered_lines >= other.covered_lines && self.covered_branches >= other.covered_branches
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundary {
    pub phase: Phase,
    /// Index of the first prompt record of the phase.
    pub first_prompt: usize,
    /// One past the last prompt record of the phase.
    pub end_prompt: usize,
    /// Coverage when the phase ended.
    pub coverage: CoverageSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub wall_secs: f64,
    pub first_prompt_secs: Option<f64>,
    pub last_prompt_secs: Option<f64>,
    pub prompts: usize,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    #[default]
    Running,
    Completed,
    TokenBudgetExhausted,
    WallClockExceeded,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub status: RunStatus,
    /// Coverage before the first prompt.
    pub baseline: CoverageSnapshot,
    pub records: Vec<PromptRecord>,
    /// Coverage after each record, parallel to `records`.
    pub progression: Vec<CoverageSnapshot>,
    pub phases: Vec<PhaseBoundary>,
    pub totals: Totals,
    /// Lines still uncovered after regeneration.
    pub unachieved: Vec<LineId>,
}

impl RunLog {
    pub fn push(&mut self, record: PromptRecord, coverage: CoverageSnapshot) {
        self.records.push(record);
        self.progression.push(coverage);
    }

    /// Line counts after each prompt, preceded by the baseline.
    pub fn line_series(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.baseline.covered_lines).chain(self.progression.iter().map(|s| s.covered_lines))
    }

    /// Whether each prompt added line coverage.
    pub fn line_progress(&self) -> Vec<bool> {
        let series: Vec<usize> = self.line_series().collect();
        series.windows(2).map(|w| w[1] > w[0]).collect()
    }

    pub fn phase(&self, phase: Phase) -> Option<&PhaseBoundary> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    /// Main (non-repair) prompts issued for `target` in `phase`.
    pub fn attempts(&self, phase: Phase, target: &LineId) -> usize {
        self.records.iter().filter(|r| r.phase == phase && r.target.as_ref() == Some(target)).count()
    }
}

/// True when each of the last two prompts added no line coverage.
pub fn saturation_check(log: &RunLog) -> bool {
    let progress = log.line_progress();
    progress.len() >= 2 && !progress[progress.len() - 1] && !progress[progress.len() - 2]
}

pub trait Clock {
    fn elapsed(&self) -> Duration;
}

pub struct SystemClock {
    start: Instant,
    offset: Duration,
}

impl SystemClock {
    pub fn new() -> Self {
        Self::with_offset(Duration::ZERO)
    }

    /// Clock that starts at `offset`, for resumed runs.
    pub fn with_offset(offset: Duration) -> Self {
        Self { start: Instant::now(), offset }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.offset + self.start.elapsed()
    }
}

/// Always reports the same elapsed time; keeps mock runs reproducible.
pub struct FixedClock(pub Duration);

impl Clock for FixedClock {
    fn elapsed(&self) -> Duration {
        self.0
    }
}
