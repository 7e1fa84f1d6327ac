//! Pre-parse candidate filtering: a sound structural filter, a lossy
//! top-k frequency filter, and the retry that lifts the frequency filter when
//! the first parse attempt finds nothing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::grammar::{FrequencyTable, Grammar, NodeKind, TreeKind};
use crate::select::TreeAssignment;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionReport {
    pub before: usize,
    pub removed_by_structure: usize,
    pub removed_by_frequency: usize,
    pub survivors: usize,
}

/// Candidate bookkeeping for one sentence. The counts describe the
/// assignment that produced the reported parses, so after a fallback
/// `removed_by_frequency` is zero everywhere.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub positions: Vec<PositionReport>,
    pub fallback_triggered: bool,
}

impl FilterReport {
    pub fn is_consistent(&self) -> bool {
        self.positions.iter().all(|p| p.before == p.removed_by_structure + p.removed_by_frequency + p.survivors)
    }
}

/// Obligatory material a tree needs on each side of its anchor.
#[derive(Debug, Clone, Default)]
struct Frontier {
    /// Substitution and foot nodes left / right of the anchor.
    left_slots: usize,
    right_slots: usize,
    left_subst: Vec<String>,
    right_subst: Vec<String>,
}

fn frontier_of(grammar: &Grammar, name: &str) -> Frontier {
    let tree = grammar.tree(name).expect("assignment trees exist");
    let mut f = Frontier::default();
    let mut seen_anchor = false;
    for (_, node) in tree.root.frontier() {
        match node.kind {
            NodeKind::Anchor => seen_anchor = true,
            NodeKind::Substitution | NodeKind::Foot => {
                let (slots, subst) = if seen_anchor {
                    (&mut f.right_slots, &mut f.right_subst)
                } else {
                    (&mut f.left_slots, &mut f.left_subst)
                };
                *slots += 1;
                if node.kind == NodeKind::Substitution {
                    subst.push(node.label.clone());
                }
            }
            NodeKind::Internal => {}
        }
    }
    f
}

/// Removes candidates that cannot appear in any complete parse: a tree whose
/// obligatory frontier nodes on one side of its anchor outnumber the words
/// there, or with a substitution slot whose category no initial tree anchored
/// on that side can supply. Applied until nothing more is removed.
pub fn structural_filter(grammar: &Grammar, assignment: &TreeAssignment) -> TreeAssignment {
    let n = assignment.len();
    let mut positions = assignment.positions.clone();
    loop {
        // prefix/suffix sets of initial-tree root categories available
        let roots: Vec<BTreeSet<&str>> = positions
            .iter()
            .map(|set| {
                set.iter()
                    .filter_map(|t| grammar.tree(t))
                    .filter(|t| t.kind == TreeKind::Initial)
                    .map(|t| t.root_label())
                    .collect()
            })
            .collect();
        let mut left_avail: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); n + 1];
        for i in 0..n {
            left_avail[i + 1] = left_avail[i].union(&roots[i]).copied().collect();
        }
        let mut right_avail: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); n + 1];
        for i in (0..n).rev() {
            right_avail[i] = right_avail[i + 1].union(&roots[i]).copied().collect();
        }
        let mut changed = false;
        let mut next = positions.clone();
        for (i, set) in next.iter_mut().enumerate() {
            set.retain(|name| {
                let f = frontier_of(grammar, name);
                let keep = f.left_slots <= i
                    && f.right_slots < n - i
                    && f.left_subst.iter().all(|c| left_avail[i].contains(c.as_str()))
                    && f.right_subst.iter().all(|c| right_avail[i + 1].contains(c.as_str()));
                changed |= !keep;
                keep
            });
        }
        positions = next;
        if !changed {
            return TreeAssignment { positions };
        }
    }
}

/// Keeps the `k` most probable candidates per position. Ties go to the
/// lexicographically smaller name; trees missing from the table rank below
/// every listed tree.
pub fn frequency_filter(assignment: &TreeAssignment, freq: &FrequencyTable, k: usize) -> TreeAssignment {
    assert!(k >= 1, "k must be positive");
    let positions = assignment
        .positions
        .iter()
        .map(|set| {
            if set.len() <= k {
                return set.clone();
            }
            let mut ranked: Vec<&String> = set.iter().collect();
            ranked.sort_by(|a, b| {
                freq.prob(b)
                    .total_cmp(&freq.prob(a))
                    .then_with(|| freq.contains(b).cmp(&freq.contains(a)))
                    .then_with(|| a.cmp(b))
            });
            ranked.into_iter().take(k).cloned().collect()
        })
        .collect();
    TreeAssignment { positions }
}

/// Parses with both filters, and on zero parses retries with only the
/// structural filter applied.
pub fn filter_with_fallback<P, E>(
    grammar: &Grammar,
    assignment: &TreeAssignment,
    freq: &FrequencyTable,
    k: usize,
    mut parse_fn: impl FnMut(&TreeAssignment) -> Result<P, E>,
    is_empty: impl Fn(&P) -> bool,
) -> Result<(P, FilterReport), E> {
    let structural = structural_filter(grammar, assignment);
    let frequent = frequency_filter(&structural, freq, k);
    let report = |effective: &TreeAssignment, fallback: bool| FilterReport {
        positions: assignment
            .positions
            .iter()
            .zip(&structural.positions)
            .zip(&effective.positions)
            .map(|((b, s), e)| PositionReport {
                before: b.len(),
                removed_by_structure: b.len() - s.len(),
                removed_by_frequency: s.len() - e.len(),
                survivors: e.len(),
            })
            .collect(),
        fallback_triggered: fallback,
    };
    let first = parse_fn(&frequent)?;
    if !is_empty(&first) {
        return Ok((first, report(&frequent, false)));
    }
    let second = if frequent == structural { first } else { parse_fn(&structural)? };
    Ok((second, report(&structural, true)))
}
