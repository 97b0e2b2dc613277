//! Control dependence from post-dominators.
//!
//! Immediate dependences follow Ferrante et al.: for each branch edge
//! `A -> B`, every node on the post-dominator-tree path from `B` up to (but
//! excluding) `ipdom(A)` depends on `A` with the edge's polarity. The
//! per-line lists are then closed transitively so the whole governing
//! chain is present, and sorted by source distance from the dependent line.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::cfg::{Cfg, Node};
use super::{LineId, SubjectError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Control {
    /// Line of the governing condition.
    pub line: u32,
    /// Branch outcome under which the dependent line can execute.
    pub polarity: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cdg {
    pub file: String,
    controls: BTreeMap<u32, Vec<Control>>,
    immediate: BTreeMap<u32, Vec<Control>>,
    executable: BTreeSet<u32>,
}

impl Cdg {
    /// Proximity-ordered governing conditions of `line` (transitive).
    pub fn controls(&self, line: u32) -> &[Control] {
        self.controls.get(&line).map_or(&[], Vec::as_slice)
    }

    /// Direct (non-transitive) control dependences of `line`.
    pub fn immediate(&self, line: u32) -> &[Control] {
        self.immediate.get(&line).map_or(&[], Vec::as_slice)
    }

    pub fn is_executable(&self, line: u32) -> bool {
        self.executable.contains(&line)
    }

    pub fn lines(&self) -> impl Iterator<Item = u32> + '_ {
        self.executable.iter().copied()
    }
}

/// Returns the ordered governing conditions of `target`, nearest first.
pub fn control_conditions(cdg: &Cdg, target: &LineId) -> Result<Vec<Control>, SubjectError> {
    if target.file != cdg.file || !cdg.is_executable(target.line) {
        return Err(SubjectError::UnknownLine { file: target.file.clone(), line: target.line });
    }
    Ok(cdg.controls(target.line).to_vec())
}

pub fn build_cdg(cfg: &Cfg) -> Cdg {
    let mut immediate: BTreeMap<u32, BTreeSet<Control>> = BTreeMap::new();
    for scope in &cfg.scopes {
        let ipdom = post_dominators(cfg, scope.id);
        for &line in &scope.nodes {
            let a = Node::Line(line);
            let outs = cfg.successors(a);
            if outs.len() < 2 {
                continue;
            }
            let stop = ipdom.get(&a).copied();
            for &(b, kind) in outs {
                let Some(polarity) = kind.polarity() else { continue };
                let mut runner = Some(b);
                while let Some(r) = runner {
                    if Some(r) == stop {
                        break;
                    }
                    if let Node::Line(l) = r {
                        if l != line {
                            immediate.entry(l).or_default().insert(Control { line, polarity });
                        }
                    }
                    runner = ipdom.get(&r).copied();
                }
            }
        }
    }

    let mut controls = BTreeMap::new();
    for line in cfg.nodes() {
        let mut seen: BTreeSet<Control> = BTreeSet::new();
        let mut stack: Vec<u32> = vec![line];
        let mut visited = BTreeSet::from([line]);
        while let Some(l) = stack.pop() {
            for c in immediate.get(&l).into_iter().flatten() {
                if c.line != line {
                    seen.insert(*c);
                }
                if visited.insert(c.line) {
                    stack.push(c.line);
                }
            }
        }
        let mut list: Vec<Control> = seen.into_iter().collect();
        list.sort_by_key(|c| (c.line.abs_diff(line), c.line, !c.polarity));
        if !list.is_empty() {
            controls.insert(line, list);
        }
    }

    let immediate = immediate
        .into_iter()
        .map(|(l, set)| {
            let mut v: Vec<Control> = set.into_iter().collect();
            v.sort_by_key(|c| (c.line.abs_diff(l), c.line, !c.polarity));
            (l, v)
        })
        .collect();
    Cdg { file: cfg.file.clone(), controls, immediate, executable: cfg.executable_lines().clone() }
}

/// Immediate post-dominators of the nodes of one scope (Cooper, Harvey and
/// Kennedy's iterative scheme on the reversed graph, rooted at the exit).
fn post_dominators(cfg: &Cfg, scope: usize) -> HashMap<Node, Node> {
    let root = Node::Exit(scope);
    // Reverse postorder of the reversed graph.
    let mut order = Vec::new();
    let mut visited = BTreeSet::new();
    let mut stack = vec![(root, 0usize)];
    visited.insert(root);
    while let Some((n, i)) = stack.pop() {
        let preds = cfg.predecessors(n);
        if i < preds.len() {
            stack.push((n, i + 1));
            let p = preds[i].0;
            if visited.insert(p) {
                stack.push((p, 0));
            }
        } else {
            order.push(n);
        }
    }
    order.reverse();
    let index: HashMap<Node, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();

    let mut idom: Vec<Option<usize>> = vec![None; order.len()];
    idom[0] = Some(0);
    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
        while a != b {
            while a > b {
                a = idom[a].expect("processed");
            }
            while b > a {
                b = idom[b].expect("processed");
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for i in 1..order.len() {
            let mut new_idom: Option<usize> = None;
            for &(s, _) in cfg.successors(order[i]) {
                let Some(&si) = index.get(&s) else { continue };
                if idom[si].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => si,
                    Some(cur) => intersect(&idom, si, cur),
                });
            }
            if new_idom.is_some() && idom[i] != new_idom {
                idom[i] = new_idom;
                changed = true;
            }
        }
    }
    order
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(i, &n)| idom[i].map(|d| (n, order[d])))
        .collect()
}
