use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{branch_outcomes, ExecutionTrace};
use crate::subject::{Cfg, LineId, SourceUnit};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoverageError {
    #[error("coverage maps are over different universes")]
    UniverseMismatch,
    #[error("nothing to merge")]
    Empty,
}

/// Executable lines and decision lines a coverage map is measured against.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Universe {
    pub lines: BTreeSet<LineId>,
    pub decisions: BTreeSet<LineId>,
}

impl Universe {
    pub fn from_units<'a>(units: impl IntoIterator<Item = &'a SourceUnit>) -> Self {
        let mut u = Universe::default();
        for unit in units {
            u.lines.extend(unit.executable_lines.iter().map(|&l| unit.line_id(l)));
            u.decisions.extend(unit.decision_lines.iter().map(|&l| unit.line_id(l)));
        }
        u
    }

    pub fn total_lines(&self) -> usize {
        self.lines.len()
    }

    /// Two outcomes per decision.
    pub fn total_branches(&self) -> usize {
        2 * self.decisions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMap {
    universe: Arc<Universe>,
    covered_lines: BTreeSet<LineId>,
    covered_branches: BTreeSet<(LineId, bool)>,
}

impl CoverageMap {
    pub fn empty(universe: Arc<Universe>) -> Self {
        Self { universe, covered_lines: BTreeSet::new(), covered_branches: BTreeSet::new() }
    }

    /// Builds a map from explicit sets; elements outside the universe are dropped.
    pub fn from_sets(
        universe: Arc<Universe>,
        lines: impl IntoIterator<Item = LineId>,
        branches: impl IntoIterator<Item = (LineId, bool)>,
    ) -> Self {
        let mut m = Self::empty(universe);
        m.add(lines, branches);
        m
    }

    /// Coverage of one trace over the given control-flow graphs.
    pub fn from_trace(universe: Arc<Universe>, trace: &ExecutionTrace, cfgs: &[&Cfg]) -> Self {
        let branches: Vec<_> = cfgs.iter().flat_map(|cfg| branch_outcomes(trace, cfg)).collect();
        Self::from_sets(universe, trace.executed_lines.iter().cloned(), branches)
    }

    fn add(&mut self, lines: impl IntoIterator<Item = LineId>, branches: impl IntoIterator<Item = (LineId, bool)>) {
        for l in lines {
            if self.universe.lines.contains(&l) {
                self.covered_lines.insert(l);
            }
        }
        for b in branches {
            if self.universe.decisions.contains(&b.0) {
                self.covered_branches.insert(b);
            }
        }
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn covered_lines(&self) -> &BTreeSet<LineId> {
        &self.covered_lines
    }

    pub fn covered_branches(&self) -> &BTreeSet<(LineId, bool)> {
        &self.covered_branches
    }

    pub fn covers(&self, line: &LineId) -> bool {
        self.covered_lines.contains(line)
    }

    /// (executable line count, decision outcome count).
    pub fn totals(&self) -> (usize, usize) {
        (self.universe.total_lines(), self.universe.total_branches())
    }

    /// Executable lines not yet covered, ascending.
    pub fn uncovered_lines(&self) -> impl Iterator<Item = &LineId> {
        self.universe.lines.iter().filter(|l| !self.covered_lines.contains(l))
    }

    /// Unions `other` into `self`.
    pub fn merge_from(&mut self, other: &CoverageMap) -> Result<(), CoverageError> {
        if self.universe != other.universe {
            return Err(CoverageError::UniverseMismatch);
        }
        self.covered_lines.extend(other.covered_lines.iter().cloned());
        self.covered_branches.extend(other.covered_branches.iter().cloned());
        Ok(())
    }

    /// Lines and branches of `other` that `self` lacks.
    pub fn gain_over(&self, other: &CoverageMap) -> (usize, usize) {
        (
            other.covered_lines.difference(&self.covered_lines).count(),
            other.covered_branches.difference(&self.covered_branches).count(),
        )
    }
}

pub fn merge(maps: &[CoverageMap]) -> Result<CoverageMap, CoverageError> {
    let (first, rest) = maps.split_first().ok_or(CoverageError::Empty)?;
    let mut out = first.clone();
    for m in rest {
        out.merge_from(m)?;
    }
    Ok(out)
}

/// Percentages; `None` when the corresponding total is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics {
    pub line_pct: Option<f64>,
    pub branch_pct: Option<f64>,
    pub combined_pct: Option<f64>,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

impl CoverageMetrics {
    pub fn from_counts(lines: (usize, usize), branches: (usize, usize)) -> Self {
        Self {
            line_pct: pct(lines.0, lines.1),
            branch_pct: pct(branches.0, branches.1),
            combined_pct: pct(lines.0 + branches.0, lines.1 + branches.1),
        }
    }
}

pub fn coverage_metrics(map: &CoverageMap) -> CoverageMetrics {
    let (lines, branches) = map.totals();
    CoverageMetrics::from_counts((map.covered_lines.len(), lines), (map.covered_branches.len(), branches))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn universe(lines: u32, decisions: u32) -> Arc<Universe> {
        Arc::new(Universe {
            lines: (1..=lines).map(|l| LineId::new("m.py", l)).collect(),
            decisions: (1..=decisions).map(|l| LineId::new("m.py", l)).collect(),
        })
    }

    fn close(a: Option<f64>, b: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() < 0.005)
    }

    #[test]
    fn metrics_example() {
        let u = universe(20, 5);
        let m = CoverageMap::from_sets(
            u,
            (1..=10).map(|l| LineId::new("m.py", l)),
            [(1, true), (1, false), (2, true), (3, false)].map(|(l, p)| (LineId::new("m.py", l), p)),
        );
        let c = coverage_metrics(&m);
        assert!(close(c.line_pct, 50.0));
        assert!(close(c.branch_pct, 40.0));
        assert!(close(c.combined_pct, 46.67));
    }

    #[test]
    fn full_and_empty() {
        let u = universe(3, 1);
        let empty = CoverageMap::empty(u.clone());
        let c = coverage_metrics(&empty);
        assert_eq!((c.line_pct, c.branch_pct, c.combined_pct), (Some(0.0), Some(0.0), Some(0.0)));
        let full = CoverageMap::from_sets(
            u,
            (1..=3).map(|l| LineId::new("m.py", l)),
            [true, false].map(|p| (LineId::new("m.py", 1), p)),
        );
        let c = coverage_metrics(&full);
        assert_eq!((c.line_pct, c.branch_pct, c.combined_pct), (Some(100.0), Some(100.0), Some(100.0)));
        let none = coverage_metrics(&CoverageMap::empty(Arc::new(Universe::default())));
        assert_eq!(none.line_pct, None);
    }

    #[test]
    fn out_of_universe_elements_are_ignored() {
        let m = CoverageMap::from_sets(universe(2, 1), [LineId::new("m.py", 9)], [(LineId::new("m.py", 2), true)]);
        assert!(m.covered_lines().is_empty());
        assert!(m.covered_branches().is_empty());
    }

    #[test]
    fn merge_identities_and_mismatch() {
        let u = universe(5, 2);
        let m = CoverageMap::from_sets(u.clone(), [LineId::new("m.py", 2)], [(LineId::new("m.py", 1), true)]);
        let e = CoverageMap::empty(u);
        assert_eq!(merge(&[m.clone(), e]).unwrap(), m);
        assert_eq!(merge(&[m.clone(), m.clone()]).unwrap(), m);
        let other = CoverageMap::empty(universe(4, 2));
        assert_eq!(merge(&[m, other]).unwrap_err(), CoverageError::UniverseMismatch);
        assert_eq!(merge(&[]).unwrap_err(), CoverageError::Empty);
    }
}
