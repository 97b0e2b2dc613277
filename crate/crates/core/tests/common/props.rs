//! Random instances for the retrieval and coverage properties, shared by
//! the property tests and the acceptance report.

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use weaver_core::subject::{Control, LineId};
use weaver_core::trace::{CoverageMap, Universe};

#[derive(Debug, Clone)]
pub struct Instance {
    pub target: u32,
    /// Proximity-ordered, as a dependence graph hands them out.
    pub conds: Vec<Control>,
    /// Executed lines per candidate test.
    pub tests: Vec<BTreeSet<u32>>,
}

fn lines_strategy(target: u32) -> impl Strategy<Value = BTreeSet<u32>> {
    proptest::collection::btree_set((1u32..90).prop_filter("not the target", move |l| *l != target), 0..12)
}

pub fn instance() -> impl Strategy<Value = Instance> {
    (10u32..70).prop_flat_map(|target| {
        let conds = proptest::collection::btree_map(
            (1u32..90).prop_filter("not the target", move |l| *l != target),
            any::<bool>(),
            0..=8,
        );
        let tests = proptest::collection::vec(lines_strategy(target), 0..=20);
        (Just(target), conds, tests).prop_map(|(target, conds, tests)| {
            let mut conds: Vec<Control> = conds.into_iter().map(|(line, polarity)| Control { line, polarity }).collect();
            conds.sort_by_key(|c| (c.line.abs_diff(target), c.line, !c.polarity));
            Instance { target, conds, tests }
        })
    })
}

pub fn extra_test(target: u32) -> impl Strategy<Value = BTreeSet<u32>> {
    lines_strategy(target)
}

/// Exhaustive answer: each test's distance is the minimum over every
/// condition it executed; the winner is the smallest, earliest on ties.
pub fn brute_force(inst: &Instance) -> Option<(usize, u32)> {
    let mut best: Option<(usize, u32)> = None;
    for (i, lines) in inst.tests.iter().enumerate() {
        let d = inst.conds.iter().filter(|c| lines.contains(&c.line)).map(|c| c.line.abs_diff(inst.target)).min();
        if let Some(d) = d {
            match best {
                Some((_, m)) if m <= d => {}
                _ => best = Some((i, d)),
            }
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Maps {
    pub universe: Arc<Universe>,
    pub a: CoverageMap,
    pub b: CoverageMap,
    pub c: CoverageMap,
}

fn map_over(universe: Arc<Universe>, n: u32) -> impl Strategy<Value = CoverageMap> {
    let lines = proptest::collection::btree_set(1..=n, 0..=n as usize);
    let branches = proptest::collection::btree_set((1..=n, any::<bool>()), 0..=(2 * n) as usize);
    (lines, branches).prop_map(move |(lines, branches)| {
        CoverageMap::from_sets(
            universe.clone(),
            lines.into_iter().map(|l| LineId::new("m.py", l)),
            branches.into_iter().map(|(l, b)| (LineId::new("m.py", l), b)),
        )
    })
}

/// Three maps over one universe of up to 40 lines, some of them decisions.
pub fn maps() -> impl Strategy<Value = Maps> {
    (1u32..40)
        .prop_flat_map(|n| (Just(n), proptest::collection::btree_set(1..=n, 0..=n as usize)))
        .prop_flat_map(|(n, decisions)| {
            let universe = Arc::new(Universe {
                lines: (1..=n).map(|l| LineId::new("m.py", l)).collect(),
                decisions: decisions.into_iter().map(|l| LineId::new("m.py", l)).collect(),
            });
            (Just(universe.clone()), map_over(universe.clone(), n), map_over(universe.clone(), n), map_over(universe, n))
        })
        .prop_map(|(universe, a, b, c)| Maps { universe, a, b, c })
}

fn closest(inst: &Instance) -> Option<(usize, u32)> {
    weaver_core::retrieval::closest_index(&inst.conds, inst.target, inst.tests.iter().map(|t| move |l: u32| t.contains(&l)))
}

pub fn check_closest(inst: &Instance) -> Result<(), TestCaseError> {
    prop_assert_eq!(closest(inst), brute_force(inst));
    Ok(())
}

/// Appending a test can only keep or shrink the best distance.
pub fn check_added_test(inst: &Instance, extra: BTreeSet<u32>) -> Result<(), TestCaseError> {
    let before = closest(inst).map(|(_, d)| d);
    let mut grown = inst.clone();
    grown.tests.push(extra);
    let after = closest(&grown).map(|(_, d)| d);
    match (before, after) {
        (Some(b), Some(a)) => prop_assert!(a <= b),
        (Some(_), None) => prop_assert!(false, "a found test was lost"),
        _ => {}
    }
    Ok(())
}

pub fn check_coverage(m: &Maps) -> Result<(), TestCaseError> {
    use weaver_core::trace::{coverage_metrics, merge};
    for map in [&m.a, &m.b, &m.c] {
        let x = coverage_metrics(map);
        if let (Some(l), Some(b), Some(c)) = (x.line_pct, x.branch_pct, x.combined_pct) {
            prop_assert!(l.min(b) - 1e-9 <= c && c <= l.max(b) + 1e-9, "{c} outside [{l}, {b}]");
        }
        for p in [x.line_pct, x.branch_pct, x.combined_pct].into_iter().flatten() {
            prop_assert!((0.0..=100.0).contains(&p));
        }
    }
    let ab = merge(&[m.a.clone(), m.b.clone()]).unwrap();
    let ba = merge(&[m.b.clone(), m.a.clone()]).unwrap();
    prop_assert_eq!(&ab, &ba);
    let left = merge(&[ab.clone(), m.c.clone()]).unwrap();
    let right = merge(&[m.a.clone(), merge(&[m.b.clone(), m.c.clone()]).unwrap()]).unwrap();
    prop_assert_eq!(&left, &right);
    prop_assert_eq!(&merge(&[m.a.clone(), m.a.clone()]).unwrap(), &m.a);
    let (la, lb) = (m.a.covered_lines().len(), m.b.covered_lines().len());
    prop_assert!(ab.covered_lines().len() >= la.max(lb));
    prop_assert!(ab.covered_lines().len() <= la + lb);
    prop_assert_eq!(ab.universe(), &m.universe);
    Ok(())
}
