//! Summaries of a finished run: plateaus, stratified coverage tables and
//! the emitted json/csv/text documents.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::orchestrator::RunLog;
use crate::subject::{build_cfg, ScopeKind, SourceUnit};
use crate::trace::{CoverageMap, CoverageMetrics};

/// Sum over functions of (decision lines + 1). Decisions at module level
/// belong to no function and are not counted.
pub fn cyclomatic_complexity(unit: &SourceUnit) -> usize {
    let cfg = build_cfg(unit);
    cfg.scopes
        .iter()
        .filter(|s| s.kind == ScopeKind::Function)
        .map(|s| 1 + s.nodes.iter().filter(|l| unit.decision_lines.contains(l)).count())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlateauStats {
    /// Prompts that added no line coverage.
    pub no_progress: usize,
    /// The three longest runs of such prompts, longest first.
    pub top: Vec<usize>,
}

pub fn plateau_stats(log: &RunLog) -> PlateauStats {
    plateaus_of(&log.line_progress())
}

pub(crate) fn plateaus_of(progress: &[bool]) -> PlateauStats {
    let mut runs = Vec::new();
    let mut current = 0;
    for &p in progress {
        if p {
            if current > 0 {
                runs.push(current);
            }
            current = 0;
        } else {
            current += 1;
        }
    }
    if current > 0 {
        runs.push(current);
    }
    let no_progress = runs.iter().sum();
    runs.sort_unstable_by(|a, b| b.cmp(a));
    runs.truncate(3);
    PlateauStats { no_progress, top: runs }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BucketError {
    #[error("bucket [{lo}, {hi}) is empty or reversed")]
    Empty { lo: usize, hi: usize },
    #[error("buckets [{0}, {1}) and [{2}, {3}) overlap")]
    Overlap(usize, usize, usize, usize),
}

/// Half-open range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bucket {
    pub lo: usize,
    pub hi: usize,
}

impl Bucket {
    pub const fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: usize) -> bool {
        self.lo <= v && v < self.hi
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }
}

pub const LOC_BUCKETS: [Bucket; 3] = [Bucket::new(0, 150), Bucket::new(150, 500), Bucket::new(500, 1100)];
pub const CC_BUCKETS: [Bucket; 4] =
    [Bucket::new(1, 50), Bucket::new(50, 100), Bucket::new(100, 200), Bucket::new(200, 300)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Loc,
    Cc,
}

impl Stratum {
    pub fn default_buckets(self) -> &'static [Bucket] {
        match self {
            Stratum::Loc => &LOC_BUCKETS,
            Stratum::Cc => &CC_BUCKETS,
        }
    }

    fn measure(self, unit: &SourceUnit) -> usize {
        match self {
            Stratum::Loc => unit.line_count(),
            Stratum::Cc => cyclomatic_complexity(unit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumRow {
    pub label: String,
    pub units: usize,
    pub covered_lines: usize,
    pub total_lines: usize,
    pub covered_branches: usize,
    pub total_branches: usize,
    pub metrics: CoverageMetrics,
}

/// Coverage pooled over the units falling in each bucket; units outside
/// every bucket are pooled under "other", which only appears when used.
pub fn stratified_report(
    coverage: &CoverageMap,
    units: &[&SourceUnit],
    stratum: Stratum,
    buckets: &[Bucket],
) -> Result<Vec<StratumRow>, BucketError> {
    let mut sorted = buckets.to_vec();
    sorted.sort_by_key(|b| (b.lo, b.hi));
    for b in &sorted {
        if b.lo >= b.hi {
            return Err(BucketError::Empty { lo: b.lo, hi: b.hi });
        }
    }
    for w in sorted.windows(2) {
        if w[1].lo < w[0].hi {
            return Err(BucketError::Overlap(w[0].lo, w[0].hi, w[1].lo, w[1].hi));
        }
    }

    let mut rows: Vec<StratumRow> = buckets
        .iter()
        .map(|b| StratumRow { label: b.label(), ..empty_row() })
        .chain(std::iter::once(StratumRow { label: "other".into(), ..empty_row() }))
        .collect();
    let universe = coverage.universe();
    for unit in units {
        let v = stratum.measure(unit);
        let row = &mut rows[buckets.iter().position(|b| b.contains(v)).unwrap_or(buckets.len())];
        let file = unit.file.as_str();
        row.units += 1;
        row.total_lines += universe.lines.iter().filter(|l| l.file == file).count();
        row.total_branches += 2 * universe.decisions.iter().filter(|l| l.file == file).count();
        row.covered_lines += coverage.covered_lines().iter().filter(|l| l.file == file).count();
        row.covered_branches += coverage.covered_branches().iter().filter(|(l, _)| l.file == file).count();
    }
    for row in &mut rows {
        row.metrics =
            CoverageMetrics::from_counts((row.covered_lines, row.total_lines), (row.covered_branches, row.total_branches));
    }
    if rows.last().is_some_and(|r| r.units == 0) {
        rows.pop();
    }
    Ok(rows)
}

fn empty_row() -> StratumRow {
    StratumRow {
        label: String::new(),
        units: 0,
        covered_lines: 0,
        total_lines: 0,
        covered_branches: 0,
        total_branches: 0,
        metrics: CoverageMetrics::from_counts((0, 0), (0, 0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

fn pct(v: Option<f64>) -> String {
    v.map(|p| format!("{p:.2}")).unwrap_or_default()
}

/// Renders the run log. json is the full log; csv is the per-prompt
/// progression; text is a short summary.
pub fn emit(log: &RunLog, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(log).expect("run log serializes") + "\n",
        Format::Csv => {
            let mut out = String::from("prompt,phase,line_pct,branch_pct,combined_pct\n");
            for (i, (rec, snap)) in log.records.iter().zip(&log.progression).enumerate() {
                let m = snap.metrics();
                let phase = serde_json::to_value(rec.phase).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                let _ = writeln!(out, "{},{phase},{},{},{}", i + 1, pct(m.line_pct), pct(m.branch_pct), pct(m.combined_pct));
            }
            out
        }
        Format::Text => summary(log),
    }
}

fn summary(log: &RunLog) -> String {
    let t = &log.totals;
    let run_secs = match (t.first_prompt_secs, t.last_prompt_secs) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let final_snap = log.progression.last().copied().unwrap_or(log.baseline);
    let max_lines = log.progression.iter().map(|s| s.covered_lines).chain([log.baseline.covered_lines]).max().unwrap_or(0);
    let max_line_pct = CoverageMetrics::from_counts((max_lines, final_snap.total_lines), (0, 0)).line_pct;
    let m = final_snap.metrics();
    let plateaus = plateau_stats(log);

    let mut out = String::new();
    let _ = writeln!(out, "status: {}", serde_json::to_value(log.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
    let _ = writeln!(out, "prompts: {}", log.records.len());
    let _ = writeln!(out, "run time (h): {:.3}", run_secs / 3600.0);
    let _ = writeln!(out, "tokens: {} in, {} out", t.tokens_in, t.tokens_out);
    let _ = writeln!(out, "cost: {:.4}", t.cost);
    let _ = writeln!(out, "max line coverage (%): {}", pct(max_line_pct));
    let _ = writeln!(
        out,
        "final coverage (%): line {} branch {} combined {}",
        pct(m.line_pct),
        pct(m.branch_pct),
        pct(m.combined_pct)
    );
    for p in &log.phases {
        let _ = writeln!(
            out,
            "after {:?} (prompts {}..{}): {}/{} lines, {}/{} branches",
            p.phase,
            p.first_prompt,
            p.end_prompt,
            p.coverage.covered_lines,
            p.coverage.total_lines,
            p.coverage.covered_branches,
            p.coverage.total_branches
        );
    }
    let _ = writeln!(out, "no-progress prompts: {}", plateaus.no_progress);
    let _ = writeln!(out, "longest plateaus: {:?}", plateaus.top);
    let _ = writeln!(out, "unachieved lines: {}", log.unachieved.len());
    out
}

/// Plain-text table of stratified rows.
pub fn render_strata(rows: &[StratumRow]) -> String {
    let mut out = format!("{:<12} {:>5} {:>8} {:>8} {:>8}\n", "bucket", "units", "line%", "branch%", "comb%");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>5} {:>8} {:>8} {:>8}",
            r.label,
            r.units,
            pct(r.metrics.line_pct),
            pct(r.metrics.branch_pct),
            pct(r.metrics.combined_pct)
        );
    }
    out
}
