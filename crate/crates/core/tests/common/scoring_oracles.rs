//! Hand-derived facts about the scoring fixture and the brute-force slicing oracles
//! built on them.

use std::collections::BTreeSet;

use super::SCORING_EXECUTABLE;

/// Control flow of the scoring fixture, written out by hand: (line, [(successor, outcome)]).
pub const SCORING_EDGES: &[(u32, &[(u32, Option<bool>)])] = &[
    (2, &[(3, None)]),
    (3, &[(4, None)]),
    (4, &[(6, None)]),
    (6, &[(7, Some(true)), (9, Some(false))]),
    (7, &[(8, None)]),
    (8, &[(6, None)]),
    (9, &[(10, Some(true)), (16, Some(false))]),
    (10, &[(11, Some(true)), (13, Some(false))]),
    (11, &[(31, None)]),
    (13, &[(14, None)]),
    (14, &[(15, Some(true)), (31, Some(false))]),
    (15, &[(31, None)]),
    (16, &[(17, Some(true)), (24, Some(false))]),
    (17, &[(18, Some(true)), (21, Some(false))]),
    (18, &[(19, None)]),
    (19, &[(20, Some(true)), (31, Some(false))]),
    (20, &[(31, None)]),
    (21, &[(22, Some(true)), (31, Some(false))]),
    (22, &[(31, None)]),
    (24, &[(25, Some(true)), (26, Some(false))]),
    (25, &[(31, None)]),
    (26, &[(27, Some(true)), (29, Some(false))]),
    (27, &[(31, None)]),
    (29, &[(31, None)]),
    (31, &[]),
];

pub fn scoring_succ(line: u32) -> &'static [(u32, Option<bool>)] {
    SCORING_EDGES.iter().find(|(l, _)| *l == line).map(|(_, s)| *s).unwrap()
}

/// Union of the nodes on every simple path from `from` to `to`.
pub fn simple_paths(from: u32, to: u32) -> BTreeSet<u32> {
    fn walk(at: u32, to: u32, path: &mut Vec<u32>, out: &mut BTreeSet<u32>) {
        path.push(at);
        if at == to {
            out.extend(path.iter().copied());
        } else {
            for &(next, _) in scoring_succ(at) {
                if !path.contains(&next) {
                    walk(next, to, path, out);
                }
            }
        }
        path.pop();
    }
    let mut out = BTreeSet::new();
    walk(from, to, &mut Vec::new(), &mut out);
    out
}

/// Lines that occur before `target` on some path from the entry: those with
/// a simple path from the entry and a simple path on to the target. Going
/// through a line and coming back covers the loop bodies.
pub fn path_union(target: u32) -> BTreeSet<u32> {
    SCORING_EXECUTABLE
        .into_iter()
        .filter(|&l| simple_paths(2, l).contains(&l) && simple_paths(l, target).contains(&target))
        .collect()
}

/// Hand-listed def-use pairs of the scoring fixture, restricted to what reaches each use
/// along some path: (use line, def line). Line 1 stands for the parameter.
pub const SCORING_DEF_USE: &[(u32, u32)] = &[
    (4, 1),
    (6, 1),
    (7, 3),
    (7, 7),
    (7, 6),
    (8, 2),
    (8, 8),
    (8, 6),
    (9, 1),
    (10, 1),
    (11, 8),
    (11, 2),
    (13, 8),
    (13, 2),
    (14, 1),
    (15, 13),
    (16, 8),
    (16, 2),
    (17, 4),
    (18, 8),
    (18, 2),
    (19, 1),
    (20, 18),
    (21, 3),
    (21, 7),
    (22, 8),
    (22, 2),
    (24, 1),
    (25, 8),
    (25, 2),
    (26, 3),
    (26, 7),
    (27, 8),
    (27, 2),
    (29, 8),
    (29, 2),
];

pub const SCORING_CONTROL: &[(u32, &[u32])] = &[
    (7, &[6]),
    (8, &[6]),
    (10, &[9]),
    (11, &[10, 9]),
    (13, &[10, 9]),
    (14, &[10, 9]),
    (15, &[14, 10, 9]),
    (16, &[9]),
    (17, &[16, 9]),
    (18, &[17, 16, 9]),
    (19, &[17, 16, 9]),
    (20, &[19, 17, 16, 9]),
    (21, &[17, 16, 9]),
    (22, &[21, 17, 16, 9]),
    (24, &[16, 9]),
    (25, &[24, 16, 9]),
    (26, &[24, 16, 9]),
    (27, &[26, 24, 16, 9]),
    (29, &[26, 24, 16, 9]),
];

pub fn worklist_slice(target: u32, candidates: &BTreeSet<u32>) -> BTreeSet<u32> {
    let mut out = BTreeSet::from([target]);
    let mut work = vec![target];
    while let Some(l) = work.pop() {
        let defs = SCORING_DEF_USE.iter().filter(|(u, _)| *u == l).map(|(_, d)| *d);
        let conds = SCORING_CONTROL.iter().filter(|(u, _)| *u == l).flat_map(|(_, c)| c.iter().copied());
        for dep in defs.chain(conds) {
            if dep != 1 && candidates.contains(&dep) && out.insert(dep) {
                work.push(dep);
            }
        }
    }
    out
}
