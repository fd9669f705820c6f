//! AHU color refinement.
//!
//! Colors are assigned bottom-up: the color of a node is the interned,
//! sorted multiset of its children's colors. Interning goes through one
//! [`ColorTable`], so colors are comparable across every tree colored with
//! the same table. Labels play no part.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::One;

use crate::combinatorics::{factorial, log10_factorial};
use crate::tree::{LabeledTree, NodeId};

/// Topological equivalence class of a subtree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColorId(pub u32);

/// Sorted multiset of children colors of one node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub Vec<ColorId>);

impl Signature {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

/// Interning table mapping a children signature to its color.
#[derive(Clone, Debug, Default)]
pub struct ColorTable {
    ids: HashMap<Vec<ColorId>, ColorId>,
}

impl ColorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn intern(&mut self, sig: Vec<ColorId>) -> ColorId {
        let next = ColorId(self.ids.len() as u32);
        *self.ids.entry(sig).or_insert(next)
    }

    /// Colors every node of `t`, leaves first.
    pub fn color_tree(&mut self, t: &LabeledTree) -> Vec<ColorId> {
        let mut colors = vec![ColorId(u32::MAX); t.len()];
        let mut scratch = Vec::new();
        for u in t.bfs_order().into_iter().rev() {
            scratch.clear();
            scratch.extend(t.children(u).iter().map(|c| colors[c.index()]));
            scratch.sort_unstable();
            colors[u.index()] = self.intern(scratch.clone());
        }
        colors
    }
}

/// Colors of one or more trees drawn from a shared table.
#[derive(Clone, Debug)]
pub struct Coloring {
    table: ColorTable,
    trees: Vec<Vec<ColorId>>,
}

impl Coloring {
    /// Colors of the `i`-th tree passed to [`color`].
    pub fn colors(&self, i: usize) -> &[ColorId] {
        &self.trees[i]
    }

    pub fn color_of(&self, i: usize, u: NodeId) -> ColorId {
        self.trees[i][u.index()]
    }

    pub fn table(&self) -> &ColorTable {
        &self.table
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }
}

/// Colors all `trees` with one shared table.
pub fn color(trees: &[&LabeledTree]) -> Coloring {
    assert!(!trees.is_empty(), "at least one tree is required");
    let mut table = ColorTable::new();
    let trees = trees.iter().map(|t| table.color_tree(t)).collect();
    Coloring { table, trees }
}

pub fn topologically_isomorphic(t1: &LabeledTree, t2: &LabeledTree) -> bool {
    if t1.len() != t2.len() {
        return false;
    }
    let c = color(&[t1, t2]);
    c.color_of(0, t1.root()) == c.color_of(1, t2.root())
}

pub fn children_signature(t: &LabeledTree, v: NodeId, colors: &[ColorId]) -> Signature {
    let mut sig: Vec<_> = t.children(v).iter().map(|c| colors[c.index()]).collect();
    sig.sort_unstable();
    Signature(sig)
}

/// Number of tree isomorphisms from `t` onto any tree of its class, both
/// exactly and as `log10`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsomorphismCount {
    pub exact: BigUint,
    pub log10: f64,
}

/// Sizes of the runs of equal colors among the children of each node.
fn for_each_child_class(t: &LabeledTree, colors: &[ColorId], mut f: impl FnMut(usize)) {
    let mut sig = Vec::new();
    for u in t.nodes() {
        if t.degree(u) < 2 {
            continue;
        }
        sig.clear();
        sig.extend(t.children(u).iter().map(|c| colors[c.index()]));
        sig.sort_unstable();
        for run in sig.chunk_by(|a, b| a == b) {
            f(run.len());
        }
    }
}

pub fn n_equiv(t: &LabeledTree, colors: &[ColorId]) -> IsomorphismCount {
    let mut exact = BigUint::one();
    let mut log10 = 0.0;
    for_each_child_class(t, colors, |k| {
        if k > 1 {
            exact *= factorial(k);
            log10 += log10_factorial(k);
        }
    });
    IsomorphismCount { exact, log10 }
}

/// `log10` of [`n_equiv`] without building the big integer.
pub fn n_equiv_log10(t: &LabeledTree, colors: &[ColorId]) -> f64 {
    let mut log10 = 0.0;
    for_each_child_class(t, colors, |k| log10 += log10_factorial(k));
    log10
}
