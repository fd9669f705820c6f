//! Rooted unordered labeled trees stored as a dense arena.
//!
//! Node ids are contiguous `0..len()`. The storage order of children is kept
//! (so that text round-trips exactly) but no algorithm in this crate gives it
//! any meaning.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense index of a node inside one tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Interned label token, local to the tree that owns it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelId(pub u32);

impl LabelId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A node label. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(Arc<str>);

impl Label {
    /// Builds a label, rejecting empty strings and characters outside
    /// `[alphanumeric_]`.
    pub fn new(symbol: &str) -> Result<Self, TreeError> {
        if symbol.is_empty() {
            return Err(TreeError::InvalidLabel(symbol.to_owned()));
        }
        if !symbol.chars().all(is_label_char) {
            return Err(TreeError::InvalidLabel(symbol.to_owned()));
        }
        Ok(Label(Arc::from(symbol)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

fn is_label_char(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("empty input")]
    Empty,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("invalid label {0:?}")]
    InvalidLabel(String),
    #[error("invalid JSON tree: {0}")]
    Json(String),
    #[error("tree already has a root")]
    DuplicateRoot,
    #[error("node {0} does not exist")]
    UnknownNode(u32),
}

/// Incremental constructor for [`LabeledTree`].
///
/// The first node added is the root; every other node is attached to an
/// existing parent, so the result is always a valid tree.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    labels: Vec<LabelId>,
    symbols: Vec<Label>,
    interned: HashMap<Label, LabelId>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        TreeBuilder {
            parent: Vec::with_capacity(n),
            children: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
            ..Default::default()
        }
    }

    fn intern(&mut self, label: Label) -> LabelId {
        if let Some(&id) = self.interned.get(&label) {
            return id;
        }
        let id = LabelId(self.symbols.len() as u32);
        self.symbols.push(label.clone());
        self.interned.insert(label, id);
        id
    }

    fn push(&mut self, parent: Option<NodeId>, label: Label) -> NodeId {
        let id = NodeId(self.parent.len() as u32);
        let lid = self.intern(label);
        self.parent.push(parent);
        self.children.push(Vec::new());
        self.labels.push(lid);
        if let Some(p) = parent {
            self.children[p.index()].push(id);
        }
        id
    }

    pub fn root(&mut self, label: Label) -> Result<NodeId, TreeError> {
        if !self.parent.is_empty() {
            return Err(TreeError::DuplicateRoot);
        }
        Ok(self.push(None, label))
    }

    pub fn child(&mut self, parent: NodeId, label: Label) -> Result<NodeId, TreeError> {
        if parent.index() >= self.parent.len() {
            return Err(TreeError::UnknownNode(parent.0));
        }
        Ok(self.push(Some(parent), label))
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn build(self) -> Result<LabeledTree, TreeError> {
        if self.parent.is_empty() {
            return Err(TreeError::Empty);
        }
        Ok(LabeledTree {
            root: NodeId(0),
            parent: self.parent,
            children: self.children,
            labels: self.labels,
            symbols: self.symbols,
        })
    }
}

/// A rooted unordered labeled tree. Immutable once built.
#[derive(Clone)]
pub struct LabeledTree {
    root: NodeId,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    labels: Vec<LabelId>,
    symbols: Vec<Label>,
}

impl LabeledTree {
    /// A single node carrying `label`.
    pub fn leaf(label: Label) -> Self {
        let mut b = TreeBuilder::new();
        b.root(label).expect("fresh builder");
        b.build().expect("non-empty")
    }

    /// Parses the parenthesised text form, e.g. `B(A(A,B),A(C,C),C)`.
    pub fn parse(text: &str) -> Result<Self, TreeError> {
        crate::format::parse_text(text)
    }

    /// Parses either the text form or the JSON form, deciding on the first
    /// non-whitespace character.
    pub fn parse_any(input: &str) -> Result<Self, TreeError> {
        if input.trim_start().starts_with('{') {
            crate::format::parse_json(input)
        } else {
            crate::format::parse_text(input)
        }
    }

    pub fn serialize(&self) -> String {
        crate::format::to_text(self)
    }

    pub fn to_json(&self) -> serde_json::Value {
        crate::format::to_json(self)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    /// Always false: empty trees cannot be constructed.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    #[inline]
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> + Clone {
        (0..self.len() as u32).map(NodeId)
    }

    #[inline]
    pub fn parent(&self, u: NodeId) -> Option<NodeId> {
        self.parent[u.index()]
    }

    #[inline]
    pub fn children(&self, u: NodeId) -> &[NodeId] {
        &self.children[u.index()]
    }

    #[inline]
    pub fn degree(&self, u: NodeId) -> usize {
        self.children[u.index()].len()
    }

    /// Maximum out-degree over all nodes.
    pub fn max_degree(&self) -> usize {
        self.children.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_leaf(&self, u: NodeId) -> bool {
        self.children[u.index()].is_empty()
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes().filter(|&u| self.is_leaf(u)).collect()
    }

    #[inline]
    pub fn label_id(&self, u: NodeId) -> LabelId {
        self.labels[u.index()]
    }

    #[inline]
    pub fn label(&self, u: NodeId) -> &Label {
        &self.symbols[self.labels[u.index()].index()]
    }

    /// Symbol table indexed by [`LabelId`].
    pub fn symbols(&self) -> &[Label] {
        &self.symbols
    }

    pub fn symbol(&self, id: LabelId) -> &Label {
        &self.symbols[id.index()]
    }

    pub fn label_id_of(&self, label: &str) -> Option<LabelId> {
        self.symbols
            .iter()
            .position(|s| s.as_str() == label)
            .map(|i| LabelId(i as u32))
    }

    /// The set of distinct labels carried by the nodes.
    pub fn alphabet(&self) -> BTreeSet<Label> {
        self.symbols.iter().cloned().collect()
    }

    /// Number of edges between `u` and the root.
    pub fn depth(&self, mut u: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent(u) {
            d += 1;
            u = p;
        }
        d
    }

    /// Depth of every node, computed in one pass.
    pub fn depths(&self) -> Vec<u32> {
        let mut depth = vec![0u32; self.len()];
        for u in self.bfs_order() {
            for &c in self.children(u) {
                depth[c.index()] = depth[u.index()] + 1;
            }
        }
        depth
    }

    /// Maximum node depth.
    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0) as usize
    }

    /// Nodes in breadth-first order, children visited in storage order.
    pub fn bfs_order(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            queue.extend(self.children(u).iter().copied());
        }
        order
    }

    /// Nodes in depth-first preorder, children visited in storage order.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            order.push(u);
            stack.extend(self.children(u).iter().rev().copied());
        }
        order
    }

    /// Copy of the subtree rooted at `u`, renumbered in preorder.
    pub fn subtree(&self, u: NodeId) -> LabeledTree {
        self.rebuild_from(u, |_, kids| kids.to_vec())
    }

    /// Rebuilds the subtree at `top` in preorder, letting `order` choose the
    /// storage order of each node's children.
    pub(crate) fn rebuild_from<F>(&self, top: NodeId, mut order: F) -> LabeledTree
    where
        F: FnMut(NodeId, &[NodeId]) -> Vec<NodeId>,
    {
        let mut b = TreeBuilder::with_capacity(self.len());
        let new_root = b.root(self.label(top).clone()).expect("fresh builder");
        let mut stack = vec![(top, new_root)];
        while let Some((old, new)) = stack.pop() {
            let kids = order(old, self.children(old));
            // Children must be created in storage order; descend afterwards
            // in reverse so that ids follow preorder of the rebuilt tree.
            let created: Vec<_> = kids
                .iter()
                .map(|&c| {
                    (
                        c,
                        b.child(new, self.label(c).clone()).expect("parent exists"),
                    )
                })
                .collect();
            stack.extend(created.into_iter().rev());
        }
        renumber_preorder(b.build().expect("non-empty"))
    }

    /// Same shape, children order and labels. Node ids and label interning
    /// order are compared through the structure, not directly.
    pub fn structurally_equal(&self, other: &LabeledTree) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut stack = vec![(self.root, other.root)];
        while let Some((a, b)) = stack.pop() {
            if self.label(a) != other.label(b) || self.degree(a) != other.degree(b) {
                return false;
            }
            stack.extend(
                self.children(a)
                    .iter()
                    .copied()
                    .zip(other.children(b).iter().copied()),
            );
        }
        true
    }

    /// Returns the same tree with a different label on `u`.
    pub fn with_label(&self, u: NodeId, label: Label) -> LabeledTree {
        let mut labels: Vec<Label> = self.nodes().map(|x| self.label(x).clone()).collect();
        labels[u.index()] = label;
        self.relabeled(|x| labels[x.index()].clone())
    }

    /// Same shape and ids; each node's label replaced by `f(node)`.
    pub fn relabeled<F>(&self, mut f: F) -> LabeledTree
    where
        F: FnMut(NodeId) -> Label,
    {
        let mut symbols = Vec::new();
        let mut interned: HashMap<Label, LabelId> = HashMap::new();
        let labels = self
            .nodes()
            .map(|u| {
                let l = f(u);
                *interned.entry(l.clone()).or_insert_with(|| {
                    symbols.push(l);
                    LabelId(symbols.len() as u32 - 1)
                })
            })
            .collect();
        LabeledTree {
            root: self.root,
            parent: self.parent.clone(),
            children: self.children.clone(),
            labels,
            symbols,
        }
    }
}

/// Renumbers a builder-produced tree so ids follow preorder.
fn renumber_preorder(t: LabeledTree) -> LabeledTree {
    let order = t.preorder();
    if order.iter().enumerate().all(|(i, u)| u.index() == i) {
        return t;
    }
    let mut b = TreeBuilder::with_capacity(t.len());
    let mut new_id = vec![NodeId(0); t.len()];
    for &u in &order {
        let id = match t.parent(u) {
            None => b.root(t.label(u).clone()),
            Some(p) => b.child(new_id[p.index()], t.label(u).clone()),
        }
        .expect("preorder visits parents first");
        new_id[u.index()] = id;
    }
    b.build().expect("non-empty")
}

impl PartialEq for LabeledTree {
    fn eq(&self, other: &Self) -> bool {
        self.structurally_equal(other)
    }
}

impl Eq for LabeledTree {}

impl fmt::Debug for LabeledTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LabeledTree({})", self.serialize())
    }
}

impl fmt::Display for LabeledTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_t1() -> LabeledTree {
        LabeledTree::parse("B(A(A,B),A(C,C),C)").unwrap()
    }

    #[test]
    fn single_node() {
        let t = LabeledTree::parse("A").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.label(t.root()).as_str(), "A");
        assert_eq!(t.leaves(), vec![t.root()]);
        assert_eq!(t.depth(t.root()), 0);
        assert_eq!(t.max_degree(), 0);
    }

    #[test]
    fn worked_example_accessors() {
        let t = worked_t1();
        assert_eq!(t.len(), 8);
        assert_eq!(t.max_degree(), 3);
        assert_eq!(t.degree(t.root()), 3);
        let alphabet: Vec<_> = t.alphabet().iter().map(|l| l.to_string()).collect();
        assert_eq!(alphabet, ["A", "B", "C"]);
        assert_eq!(t.height(), 2);
        assert_eq!(t.leaves().len(), 5);

        // Breadth-first naming u1..u8 of the worked example uses the
        // storage order C, A(C,C), A(A,B).
        let t = LabeledTree::parse("B(C,A(C,C),A(A,B))").unwrap();
        let bfs = t.bfs_order();
        let u = |i: usize| bfs[i - 1];
        assert_eq!(t.depth(u(2)), 1);
        assert!(t.is_leaf(u(2)));
        assert_eq!(t.label(u(2)).as_str(), "C");
        assert_eq!(t.depth(u(8)), 2);
        assert_eq!(t.parent(u(8)), Some(u(4)));
    }

    #[test]
    fn depth_and_degree_laws() {
        let t = worked_t1();
        let depths = t.depths();
        for u in t.nodes() {
            assert_eq!(depths[u.index()] as usize, t.depth(u));
            if let Some(p) = t.parent(u) {
                assert_eq!(t.depth(u), t.depth(p) + 1);
                assert!(t.children(p).contains(&u));
            }
        }
        let total: usize = t.nodes().map(|u| t.degree(u)).sum();
        assert_eq!(total, t.len() - 1);
    }

    #[test]
    fn subtree_of_root_is_identity() {
        let t = worked_t1();
        assert_eq!(t.subtree(t.root()), t);
        let a = t.children(t.root())[1];
        assert_eq!(t.subtree(a).serialize(), "A(C,C)");
    }

    #[test]
    fn structural_equality_ignores_interning_order() {
        let a = LabeledTree::parse("X(Y,Z)").unwrap();
        let b = a.relabeled(|u| a.label(u).clone());
        assert_eq!(a, b);
        let c = LabeledTree::parse("X(Z,Y)").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn with_label_changes_one_node() {
        let t = worked_t1();
        let leaf = t.leaves()[0];
        let p = t.with_label(leaf, Label::new("Q").unwrap());
        let diff = t.nodes().filter(|&u| t.label(u) != p.label(u)).count();
        assert_eq!(diff, 1);
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(Label::new("").is_err());
        assert!(Label::new("a b").is_err());
        assert!(Label::new("α").is_ok());
    }
}
