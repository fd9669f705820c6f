//! Ground truth by exhaustive search, and a backtracking completer for
//! states the engine leaves undecided.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ahu::{self, ColorId, Coloring};
use crate::bijection::CipherMode;
use crate::engine::{cipher_of, Choice, EngineState, Outcome, Reason};
use crate::tree::{Label, LabeledTree, NodeId};

/// A tree isomorphism `phi` (indexed by left node) together with the label
/// relation it induces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsomorphismWitness {
    pub phi: Vec<NodeId>,
    pub induced_relation: BTreeSet<(Label, Label)>,
}

impl IsomorphismWitness {
    pub fn new(t1: &LabeledTree, t2: &LabeledTree, phi: Vec<NodeId>) -> Self {
        let induced_relation = induced_relation(t1, t2, &phi);
        IsomorphismWitness {
            phi,
            induced_relation,
        }
    }

    /// The witness of `phi⁻¹`, from `t2` onto `t1`.
    pub fn inverse(&self, t2: &LabeledTree, t1: &LabeledTree) -> Self {
        let mut inv = vec![NodeId(0); self.phi.len()];
        for (u, v) in self.phi.iter().enumerate() {
            inv[v.index()] = NodeId(u as u32);
        }
        IsomorphismWitness::new(t2, t1, inv)
    }

    /// The witness of `next ∘ self`, from `t1` onto `t3`.
    pub fn then(&self, next: &IsomorphismWitness, t1: &LabeledTree, t3: &LabeledTree) -> Self {
        let phi = self.phi.iter().map(|v| next.phi[v.index()]).collect();
        IsomorphismWitness::new(t1, t3, phi)
    }
}

/// `{(label(u), label(phi(u)))}` over all nodes `u` of `t1`.
pub fn induced_relation(
    t1: &LabeledTree,
    t2: &LabeledTree,
    phi: &[NodeId],
) -> BTreeSet<(Label, Label)> {
    t1.nodes()
        .map(|u| (t1.label(u).clone(), t2.label(phi[u.index()]).clone()))
        .collect()
}

/// Whether `phi` is a bijection preserving the parent relation and
/// mapping roots together.
pub fn is_tree_isomorphism(t1: &LabeledTree, t2: &LabeledTree, phi: &[NodeId]) -> bool {
    if t1.len() != t2.len() || phi.len() != t1.len() {
        return false;
    }
    let mut seen = vec![false; t2.len()];
    for &v in phi {
        if v.index() >= seen.len() || std::mem::replace(&mut seen[v.index()], true) {
            return false;
        }
    }
    t1.nodes().all(|u| {
        let v = phi[u.index()];
        match (t1.parent(u), t2.parent(v)) {
            (None, None) => true,
            (Some(p), Some(q)) => phi[p.index()] == q,
            _ => false,
        }
    })
}

/// Whether a relation is a bijection between its two projections.
pub fn relation_is_bijection(rel: &BTreeSet<(Label, Label)>) -> bool {
    let mut fwd: BTreeMap<&Label, usize> = BTreeMap::new();
    let mut back: BTreeMap<&Label, usize> = BTreeMap::new();
    for (a, b) in rel {
        *fwd.entry(a).or_default() += 1;
        *back.entry(b).or_default() += 1;
    }
    fwd.values().all(|&c| c == 1) && back.values().all(|&c| c == 1)
}

/// Whether the induced relation is an admissible substitution cipher.
pub fn is_ciphering(w: &IsomorphismWitness, mode: CipherMode) -> bool {
    relation_is_bijection(&w.induced_relation)
        && match mode {
            CipherMode::Bijective => true,
            CipherMode::Identity => w.induced_relation.iter().all(|(a, b)| a == b),
        }
}

/// One node's children of a single color: the permutation slot chooses
/// how they are matched.
struct Group {
    color: ColorId,
    left: Vec<NodeId>,
    slot: Option<usize>,
}

/// Iterator over `Isom(t1, t2)`, in lexicographic order of the per-group
/// permutations (later groups vary fastest).
pub struct Isomorphisms<'a> {
    t1: &'a LabeledTree,
    t2: &'a LabeledTree,
    colors2: Vec<ColorId>,
    plan: Vec<(NodeId, Vec<Group>)>,
    perms: Vec<Vec<usize>>,
    done: bool,
}

impl<'a> Isomorphisms<'a> {
    fn empty(t1: &'a LabeledTree, t2: &'a LabeledTree) -> Self {
        Isomorphisms {
            t1,
            t2,
            colors2: Vec::new(),
            plan: Vec::new(),
            perms: Vec::new(),
            done: true,
        }
    }

    fn current(&self) -> Vec<NodeId> {
        let (t1, t2) = (self.t1, self.t2);
        let mut phi = vec![NodeId(0); t1.len()];
        phi[t1.root().index()] = t2.root();
        for (u, groups) in &self.plan {
            let v = phi[u.index()];
            for g in groups {
                let mut right: Vec<NodeId> = t2
                    .children(v)
                    .iter()
                    .copied()
                    .filter(|c| self.colors2[c.index()] == g.color)
                    .collect();
                right.sort_unstable();
                match g.slot {
                    Some(slot) => {
                        for (i, &x) in g.left.iter().enumerate() {
                            phi[x.index()] = right[self.perms[slot][i]];
                        }
                    }
                    None => phi[g.left[0].index()] = right[0],
                }
            }
        }
        phi
    }
}

/// Rearranges `p` into the next permutation in lexicographic order;
/// returns false (and resets to ascending order) after the last one.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        p.reverse();
        return false;
    };
    let j = p
        .iter()
        .rposition(|&x| x > p[i])
        .expect("pivot has a successor");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

impl Iterator for Isomorphisms<'_> {
    type Item = IsomorphismWitness;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let phi = self.current();
        self.done = !self.perms.iter_mut().rev().any(|p| next_permutation(p));
        Some(IsomorphismWitness::new(self.t1, self.t2, phi))
    }
}

/// All tree isomorphisms from `t1` onto `t2`. `coloring` must hold the
/// colors of `t1` and `t2` (in that order) from one shared table.
pub fn enumerate_isomorphisms<'a>(
    t1: &'a LabeledTree,
    t2: &'a LabeledTree,
    coloring: &Coloring,
) -> Isomorphisms<'a> {
    let (c1, c2) = (coloring.colors(0), coloring.colors(1));
    if t1.len() != t2.len() || c1[t1.root().index()] != c2[t2.root().index()] {
        return Isomorphisms::empty(t1, t2);
    }
    let mut plan = Vec::new();
    let mut perms = Vec::new();
    for u in t1.bfs_order() {
        let mut by_color: BTreeMap<ColorId, Vec<NodeId>> = BTreeMap::new();
        for &c in t1.children(u) {
            by_color.entry(c1[c.index()]).or_default().push(c);
        }
        let groups: Vec<Group> = by_color
            .into_iter()
            .map(|(color, mut left)| {
                left.sort_unstable();
                let slot = (left.len() > 1).then(|| {
                    perms.push((0..left.len()).collect());
                    perms.len() - 1
                });
                Group { color, left, slot }
            })
            .collect();
        if !groups.is_empty() {
            plan.push((u, groups));
        }
    }
    Isomorphisms {
        t1,
        t2,
        colors2: c2.to_vec(),
        plan,
        perms,
        done: false,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{count_log10:.2} (log10) isomorphisms exceed the enumeration cap of {cap}")]
    CapExceeded { count_log10: f64, cap: u64 },
}

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Decides `t1 ~ t2` by enumerating every tree isomorphism. Refuses when
/// there are more than `cap` of them.
pub fn decide_brute(
    t1: &LabeledTree,
    t2: &LabeledTree,
    mode: CipherMode,
    cap: u64,
) -> Result<(bool, Option<IsomorphismWitness>), OracleError> {
    let coloring = ahu::color(&[t1, t2]);
    let count_log10 = ahu::n_equiv_log10(t1, coloring.colors(0));
    if count_log10 > (cap as f64).log10() + 1e-9 {
        return Err(OracleError::CapExceeded { count_log10, cap });
    }
    let found = enumerate_isomorphisms(t1, t2, &coloring).find(|w| is_ciphering(w, mode));
    Ok((found.is_some(), found))
}

/// Completes an undecided engine state by depth-first search over the
/// remaining choices, smallest container first.
pub fn complete_backtracking(state: EngineState<'_>) -> Outcome<'_> {
    let mode = state.f().mode();
    match search(state) {
        Some(done) => {
            let cipher = cipher_of(&done);
            let (t1, t2) = done.trees();
            let w = IsomorphismWitness::new(t1, t2, cipher.phi.clone());
            assert!(
                is_tree_isomorphism(t1, t2, &w.phi) && is_ciphering(&w, mode),
                "completed mapping is not a tree ciphering"
            );
            Outcome::Isomorphic(cipher)
        }
        None => Outcome::NotIsomorphic(Reason::SearchExhausted),
    }
}

fn search(state: EngineState<'_>) -> Option<EngineState<'_>> {
    let Some(choice) = state.next_choice() else {
        return state.is_complete().then_some(state);
    };
    match choice {
        Choice::Node { u, candidates } => candidates.into_iter().find_map(|v| {
            let mut s = state.clone();
            s.map_nodes(u, v).and_then(|()| s.propagate()).ok()?;
            search(s)
        }),
        Choice::Sets { set, candidates } => candidates.into_iter().find_map(|q| {
            let mut s = state.clone();
            s.pair_sets(set, q).and_then(|()| s.propagate()).ok()?;
            search(s)
        }),
    }
}

/// Engine reduction followed, when needed, by backtracking.
pub fn decide_complete<'a>(
    t1: &'a LabeledTree,
    t2: &'a LabeledTree,
    mode: CipherMode,
) -> Outcome<'a> {
    let report = crate::engine::run(t1, t2, &crate::engine::EngineOptions::with_mode(mode));
    match report.outcome {
        Outcome::Undecided(state) => complete_backtracking(*state),
        other => other,
    }
}
