use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;

use super::{Reason, SplitEvent, SplitKind};
use crate::ahu::ColorId;
use crate::bijection::{CipherMode, LabelCipher, PartialBijection};
use crate::combinatorics::{factorial, log10_factorial};
use crate::tree::{LabelId, LabeledTree, NodeId};

pub(crate) const LEFT: usize = 0;
pub(crate) const RIGHT: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BagId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CollectionId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetId(pub u32);

/// Where an unmapped node currently lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Mapped,
    Bag(BagId),
    Set(SetId),
}

/// Two equal-size node sets, one per tree, whose members are mutual
/// mapping candidates. The id doubles as the creation index.
#[derive(Clone, Debug)]
pub struct Bag {
    id: BagId,
    sides: [Vec<NodeId>; 2],
}

impl Bag {
    pub fn id(&self) -> BagId {
        self.id
    }

    pub fn left(&self) -> &[NodeId] {
        &self.sides[LEFT]
    }

    pub fn right(&self) -> &[NodeId] {
        &self.sides[RIGHT]
    }

    pub fn size(&self) -> usize {
        self.sides[LEFT].len()
    }
}

/// A label-uniform node set of one tree, owned by a collection.
#[derive(Clone, Debug)]
struct NodeSet {
    side: usize,
    nodes: Vec<NodeId>,
    label: LabelId,
    collection: CollectionId,
}

/// Label-uniform node sets grouped by cardinality. Sets of equal size are
/// candidates to be paired into bags.
#[derive(Clone, Debug)]
pub struct Collection {
    id: CollectionId,
    buckets: BTreeMap<usize, [Vec<SetId>; 2]>,
}

impl Collection {
    pub fn id(&self) -> CollectionId {
        self.id
    }

    /// `(n, #C(n))` for every populated cardinality, ascending.
    pub fn counts(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.buckets
            .iter()
            .map(|(&n, sides)| (n, sides[LEFT].len()))
    }

    fn count(&self, n: usize) -> usize {
        self.buckets.get(&n).map_or(0, |s| s[LEFT].len())
    }

    fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }
}

/// A branching decision exposed to the backtracking completer.
#[derive(Clone, Debug)]
pub(crate) enum Choice {
    /// Map `u` to one of `candidates`.
    Node { u: NodeId, candidates: Vec<NodeId> },
    /// Pair the left set `set` with one of the right `candidates`.
    Sets { set: SetId, candidates: Vec<SetId> },
}

/// Evolving state of a reduction run: the two partial bijections, the bags
/// and collections partitioning the unmapped nodes, and the node locator.
#[derive(Clone, Debug)]
pub struct EngineState<'a> {
    trees: [&'a LabeledTree; 2],
    colors: Arc<[Vec<ColorId>; 2]>,
    phi: PartialBijection<NodeId, NodeId>,
    f: LabelCipher,
    bags: Vec<Option<Bag>>,
    collections: Vec<Option<Collection>>,
    sets: Vec<Option<NodeSet>>,
    slot: [Vec<Slot>; 2],
    pos: [Vec<u32>; 2],
    live_bags: usize,
    live_collections: usize,
    singletons: VecDeque<BagId>,
    dirty: VecDeque<CollectionId>,
    dirty_flag: Vec<bool>,
    new_labels: VecDeque<LabelId>,
    map_nodes_calls: usize,
    splits: Option<Vec<SplitEvent>>,
}

impl<'a> EngineState<'a> {
    /// Everything in one bag, nothing mapped.
    pub(crate) fn new(
        t1: &'a LabeledTree,
        t2: &'a LabeledTree,
        colors: [Vec<ColorId>; 2],
        mode: CipherMode,
        record_splits: bool,
    ) -> Self {
        assert_eq!(t1.len(), t2.len());
        let n = t1.len();
        let mut state = EngineState {
            trees: [t1, t2],
            colors: Arc::new(colors),
            phi: PartialBijection::new(n, n),
            f: LabelCipher::new(t1, t2, mode),
            bags: Vec::new(),
            collections: Vec::new(),
            sets: Vec::new(),
            slot: [vec![Slot::Mapped; n], vec![Slot::Mapped; n]],
            pos: [vec![0; n], vec![0; n]],
            live_bags: 0,
            live_collections: 0,
            singletons: VecDeque::new(),
            dirty: VecDeque::new(),
            dirty_flag: Vec::new(),
            new_labels: VecDeque::new(),
            map_nodes_calls: 0,
            splits: record_splits.then(Vec::new),
        };
        state.create_bag(t1.nodes().collect(), t2.nodes().collect());
        state
    }

    pub fn trees(&self) -> (&'a LabeledTree, &'a LabeledTree) {
        (self.trees[LEFT], self.trees[RIGHT])
    }

    pub fn phi(&self) -> &PartialBijection<NodeId, NodeId> {
        &self.phi
    }

    pub fn f(&self) -> &LabelCipher {
        &self.f
    }

    pub fn map_nodes_calls(&self) -> usize {
        self.map_nodes_calls
    }

    pub fn is_complete(&self) -> bool {
        self.phi.is_total()
    }

    pub fn bags(&self) -> impl Iterator<Item = &Bag> {
        self.bags.iter().flatten()
    }

    pub fn collections(&self) -> impl Iterator<Item = &Collection> {
        self.collections.iter().flatten()
    }

    pub fn bag_count(&self) -> usize {
        self.live_bags
    }

    pub fn collection_count(&self) -> usize {
        self.live_collections
    }

    /// Node sets of `c` with cardinality `n` on `side` (0 = left tree).
    pub fn collection_sets(&self, c: &Collection, n: usize, side: usize) -> Vec<&[NodeId]> {
        c.buckets
            .get(&n)
            .map(|s| {
                s[side]
                    .iter()
                    .map(|&id| self.set(id).nodes.as_slice())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub(crate) fn take_splits(&mut self) -> Vec<SplitEvent> {
        self.splits.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub(crate) fn colors(&self, side: usize) -> &[ColorId] {
        &self.colors[side]
    }

    /// `log10 N(B, C)`.
    pub fn log10_search_space(&self) -> f64 {
        let bags: f64 = self.bags().map(|b| log10_factorial(b.size())).sum();
        let colls: f64 = self
            .collections()
            .flat_map(Collection::counts)
            .map(|(n, c)| c as f64 * log10_factorial(n) + log10_factorial(c))
            .sum();
        bags + colls
    }

    /// `N(B, C)` as an exact integer.
    pub fn exact_search_space(&self) -> BigUint {
        let mut acc = BigUint::one();
        for b in self.bags() {
            acc *= factorial(b.size());
        }
        for (n, c) in self.collections().flat_map(Collection::counts) {
            acc *= factorial(n).pow(c as u32);
            acc *= factorial(c);
        }
        acc
    }

    // ---- bag and set bookkeeping -------------------------------------------

    fn bag(&self, id: BagId) -> &Bag {
        self.bags[id.0 as usize].as_ref().expect("live bag")
    }

    fn set(&self, id: SetId) -> &NodeSet {
        self.sets[id.0 as usize].as_ref().expect("live set")
    }

    fn collection(&self, id: CollectionId) -> &Collection {
        self.collections[id.0 as usize]
            .as_ref()
            .expect("live collection")
    }

    fn collection_mut(&mut self, id: CollectionId) -> &mut Collection {
        self.collections[id.0 as usize]
            .as_mut()
            .expect("live collection")
    }

    fn place(&mut self, side: usize, nodes: &[NodeId], slot: Slot) {
        for (i, &u) in nodes.iter().enumerate() {
            self.slot[side][u.index()] = slot;
            self.pos[side][u.index()] = i as u32;
        }
    }

    fn create_bag(&mut self, left: Vec<NodeId>, right: Vec<NodeId>) -> BagId {
        debug_assert_eq!(left.len(), right.len());
        debug_assert!(!left.is_empty());
        let id = BagId(self.bags.len() as u32);
        self.place(LEFT, &left, Slot::Bag(id));
        self.place(RIGHT, &right, Slot::Bag(id));
        if left.len() == 1 {
            self.singletons.push_back(id);
        }
        self.bags.push(Some(Bag {
            id,
            sides: [left, right],
        }));
        self.live_bags += 1;
        id
    }

    fn delete_bag(&mut self, id: BagId) -> Bag {
        self.live_bags -= 1;
        self.bags[id.0 as usize].take().expect("live bag")
    }

    /// Removes `u` from its bag side in O(1).
    fn remove_from_bag(&mut self, side: usize, u: NodeId) {
        let Slot::Bag(id) = self.slot[side][u.index()] else {
            unreachable!("node is not in a bag")
        };
        let at = self.pos[side][u.index()] as usize;
        let members = &mut self.bags[id.0 as usize].as_mut().expect("live bag").sides[side];
        members.swap_remove(at);
        if let Some(&moved) = members.get(at) {
            self.pos[side][moved.index()] = at as u32;
        }
        self.slot[side][u.index()] = Slot::Mapped;
    }

    /// Bag size changed: queue for Rule 1 or drop when empty.
    fn bag_shrunk(&mut self, id: BagId) {
        match self.bag(id).size() {
            0 => {
                self.delete_bag(id);
            }
            1 => self.singletons.push_back(id),
            _ => {}
        }
    }

    fn create_collection(&mut self) -> CollectionId {
        let id = CollectionId(self.collections.len() as u32);
        self.collections.push(Some(Collection {
            id,
            buckets: BTreeMap::new(),
        }));
        self.dirty_flag.push(false);
        self.live_collections += 1;
        id
    }

    fn mark_dirty(&mut self, id: CollectionId) {
        if !std::mem::replace(&mut self.dirty_flag[id.0 as usize], true) {
            self.dirty.push_back(id);
        }
    }

    fn drop_collection_if_empty(&mut self, id: CollectionId) {
        if self.collection(id).is_empty() {
            self.collections[id.0 as usize] = None;
            self.live_collections -= 1;
        }
    }

    fn create_set(
        &mut self,
        c: CollectionId,
        side: usize,
        nodes: Vec<NodeId>,
        label: LabelId,
    ) -> SetId {
        let id = SetId(self.sets.len() as u32);
        self.place(side, &nodes, Slot::Set(id));
        let n = nodes.len();
        self.sets.push(Some(NodeSet {
            side,
            nodes,
            label,
            collection: c,
        }));
        self.collection_mut(c).buckets.entry(n).or_default()[side].push(id);
        id
    }

    /// Detaches a set from its bucket (the set object itself stays alive).
    fn unbucket(&mut self, id: SetId) {
        let (c, side, n) = {
            let s = self.set(id);
            (s.collection, s.side, s.nodes.len())
        };
        let coll = self.collection_mut(c);
        let sides = coll.buckets.get_mut(&n).expect("bucket of set");
        let at = sides[side]
            .iter()
            .position(|&x| x == id)
            .expect("set in bucket");
        sides[side].remove(at);
        if sides[LEFT].is_empty() && sides[RIGHT].is_empty() {
            coll.buckets.remove(&n);
        }
    }

    fn take_set(&mut self, id: SetId) -> NodeSet {
        self.unbucket(id);
        self.sets[id.0 as usize].take().expect("live set")
    }

    /// Turns the paired sets `p` (left) and `q` (right) into a bag.
    fn sets_to_bag(&mut self, p: SetId, q: SetId) -> BagId {
        let p = self.take_set(p);
        let q = self.take_set(q);
        self.create_bag(p.nodes, q.nodes)
    }

    fn extend_f(&mut self, a: LabelId, b: LabelId) -> bool {
        let fresh = self.f.get(a).is_none();
        if !self.f.ext_bij(a, b) {
            return false;
        }
        if fresh {
            self.new_labels.push_back(a);
        }
        true
    }

    fn record_split(&mut self, kind: SplitKind, whole: usize, part: usize, before: f64) {
        if self.splits.is_some() {
            let after = self.log10_search_space();
            if let Some(log) = self.splits.as_mut() {
                log.push(SplitEvent {
                    kind,
                    whole,
                    part,
                    log10_before: before,
                    log10_after: after,
                });
            }
        }
    }

    fn split_log_before(&self) -> f64 {
        if self.splits.is_some() {
            self.log10_search_space()
        } else {
            0.0
        }
    }

    // ---- MapNodes / SplitChildren --------------------------------------------

    /// Maps `u` to `v`, propagating to parents while they are not yet
    /// mapped together.
    pub(crate) fn map_nodes(&mut self, mut u: NodeId, mut v: NodeId) -> Result<(), Reason> {
        let [t1, t2] = self.trees;
        loop {
            self.map_nodes_calls += 1;
            if !self.extend_f(t1.label_id(u), t2.label_id(v)) {
                return Err(Reason::ExtBijLabelConflict);
            }
            if !self.phi.ext_bij(u, v) {
                return Err(Reason::ExtBijNodeConflict);
            }
            self.detach_pair(u, v)?;
            self.split_children(u, v)?;
            match (t1.parent(u), t2.parent(v)) {
                (None, None) => return Ok(()),
                (Some(pu), Some(pv)) => {
                    if self.phi.contains(pu, pv) {
                        return Ok(());
                    }
                    u = pu;
                    v = pv;
                }
                _ => return Err(Reason::TopologyMismatch),
            }
        }
    }

    /// Removes a freshly mapped pair from its container(s).
    fn detach_pair(&mut self, u: NodeId, v: NodeId) -> Result<(), Reason> {
        match (self.slot[LEFT][u.index()], self.slot[RIGHT][v.index()]) {
            (Slot::Bag(a), Slot::Bag(b)) if a == b => {
                self.remove_from_bag(LEFT, u);
                self.remove_from_bag(RIGHT, v);
                self.bag_shrunk(a);
                Ok(())
            }
            (Slot::Bag(_), Slot::Bag(_)) => Err(Reason::BagCardinalityMismatch),
            (Slot::Set(p), Slot::Set(q)) => {
                let (sp, sq) = (self.set(p), self.set(q));
                if sp.collection != sq.collection || sp.nodes.len() != sq.nodes.len() {
                    return Err(Reason::CollectionMismatch);
                }
                // u ↦ v forces the whole of p onto the whole of q.
                let c = sp.collection;
                let p = self.take_set(p);
                let q = self.take_set(q);
                let left: Vec<_> = p.nodes.into_iter().filter(|&x| x != u).collect();
                let right: Vec<_> = q.nodes.into_iter().filter(|&x| x != v).collect();
                self.slot[LEFT][u.index()] = Slot::Mapped;
                self.slot[RIGHT][v.index()] = Slot::Mapped;
                if !left.is_empty() {
                    self.create_bag(left, right);
                }
                self.mark_dirty(c);
                self.drop_collection_if_empty(c);
                Ok(())
            }
            (Slot::Mapped, _) | (_, Slot::Mapped) => Err(Reason::ExtBijNodeConflict),
            _ => Err(Reason::CollectionMismatch),
        }
    }

    /// Carves the unmapped children of `u` and `v` out of the containers
    /// they share with other nodes.
    fn split_children(&mut self, u: NodeId, v: NodeId) -> Result<(), Reason> {
        let mut bag_hits: BTreeMap<BagId, [Vec<NodeId>; 2]> = BTreeMap::new();
        let mut set_hits: BTreeMap<CollectionId, [BTreeMap<SetId, usize>; 2]> = BTreeMap::new();
        let mut unmapped = [0usize; 2];
        for (side, parent) in [(LEFT, u), (RIGHT, v)] {
            for &c in self.trees[side].children(parent) {
                match self.slot[side][c.index()] {
                    Slot::Mapped => {}
                    Slot::Bag(b) => {
                        unmapped[side] += 1;
                        bag_hits.entry(b).or_default()[side].push(c);
                    }
                    Slot::Set(s) => {
                        unmapped[side] += 1;
                        let coll = self.set(s).collection;
                        *set_hits.entry(coll).or_default()[side]
                            .entry(s)
                            .or_default() += 1;
                    }
                }
            }
        }
        if unmapped[LEFT] != unmapped[RIGHT] {
            return Err(Reason::BagCardinalityMismatch);
        }

        for (b, [pu, qv]) in bag_hits {
            if pu.len() != qv.len() {
                return Err(Reason::BagCardinalityMismatch);
            }
            let whole = self.bag(b).size();
            if pu.len() == whole {
                continue;
            }
            let before = self.split_log_before();
            for &x in &pu {
                self.remove_from_bag(LEFT, x);
            }
            for &y in &qv {
                self.remove_from_bag(RIGHT, y);
            }
            let part = pu.len();
            self.create_bag(pu, qv);
            self.bag_shrunk(b);
            self.record_split(SplitKind::Bag, whole, part, before);
        }

        for (c, [left, right]) in set_hits {
            let shape = |hits: BTreeMap<SetId, usize>| -> Vec<(usize, usize, SetId)> {
                let mut v: Vec<_> = hits
                    .into_iter()
                    .map(|(s, k)| (self.set(s).nodes.len(), k, s))
                    .collect();
                v.sort_unstable();
                v
            };
            let (left, right) = (shape(left), shape(right));
            let same_shape = left.len() == right.len()
                && left
                    .iter()
                    .zip(&right)
                    .all(|(a, b)| (a.0, a.1) == (b.0, b.1));
            if !same_shape {
                return Err(Reason::CollectionMismatch);
            }
            for (&(n, k, p), &(_, _, q)) in left.iter().zip(&right) {
                if k == n {
                    continue;
                }
                let before = self.split_log_before();
                let counts = {
                    let coll = self.collection(c);
                    (coll.count(n), coll.count(k), coll.count(n - k))
                };
                let trees = self.trees;
                self.split_set(p, |x| trees[LEFT].parent(x) == Some(u));
                self.split_set(q, |x| trees[RIGHT].parent(x) == Some(v));
                self.record_split(SplitKind::Collection { counts }, n, k, before);
            }
            self.mark_dirty(c);
        }
        Ok(())
    }

    /// Moves the members of `id` selected by `pick` into a new set of the
    /// same collection; the remainder stays in `id` under its new size.
    fn split_set(&mut self, id: SetId, pick: impl Fn(NodeId) -> bool) {
        let set = self.take_set(id);
        let (picked, rest): (Vec<_>, Vec<_>) = set.nodes.into_iter().partition(|&x| pick(x));
        debug_assert!(!picked.is_empty() && !rest.is_empty());
        self.create_set(set.collection, set.side, picked, set.label);
        // Reuse the old id for the remainder so set ids stay stable.
        self.place(set.side, &rest, Slot::Set(id));
        let n = rest.len();
        self.sets[id.0 as usize] = Some(NodeSet { nodes: rest, ..set });
        self.collection_mut(set.collection)
            .buckets
            .entry(n)
            .or_default()[set.side]
            .push(id);
    }

    // ---- filters --------------------------------------------------------------

    fn live_bag_ids(&self) -> Vec<BagId> {
        self.bags().map(Bag::id).collect()
    }

    /// Partitions every bag by `key`; both sides must agree on the
    /// resulting group sizes.
    pub(crate) fn refine_bags<K: Ord>(
        &mut self,
        key: impl Fn(usize, NodeId) -> K,
    ) -> Result<(), Reason> {
        for id in self.live_bag_ids() {
            let mut groups: BTreeMap<K, [Vec<NodeId>; 2]> = BTreeMap::new();
            let bag = self.bag(id);
            for side in [LEFT, RIGHT] {
                for &x in &bag.sides[side] {
                    groups.entry(key(side, x)).or_default()[side].push(x);
                }
            }
            if groups.values().any(|[l, r]| l.len() != r.len()) {
                return Err(Reason::BagCardinalityMismatch);
            }
            if groups.len() == 1 {
                continue;
            }
            self.delete_bag(id);
            for (_, [l, r]) in groups {
                self.create_bag(l, r);
            }
        }
        Ok(())
    }

    /// Labels filter: splits each bag by label, pairing label classes
    /// already related by `f` and gathering the rest into a collection.
    pub(crate) fn labels_filter(&mut self) -> Result<(), Reason> {
        let [t1, t2] = self.trees;
        for id in self.live_bag_ids() {
            let bag = self.bag(id);
            let mut left: BTreeMap<LabelId, Vec<NodeId>> = BTreeMap::new();
            let mut right: BTreeMap<LabelId, Vec<NodeId>> = BTreeMap::new();
            for &x in bag.left() {
                left.entry(t1.label_id(x)).or_default().push(x);
            }
            for &y in bag.right() {
                right.entry(t2.label_id(y)).or_default().push(y);
            }
            let (pairs, rest_left, rest_right) =
                self.match_label_classes(left, right, |v| vec![v.len()])?;
            if pairs.len() == 1 && rest_left.is_empty() {
                // Uniform bag whose label pair is already known.
                continue;
            }
            let mut sizes: BTreeMap<usize, [usize; 2]> = BTreeMap::new();
            for s in rest_left.values() {
                sizes.entry(s.len()).or_default()[LEFT] += 1;
            }
            for s in rest_right.values() {
                sizes.entry(s.len()).or_default()[RIGHT] += 1;
            }
            if sizes.values().any(|[l, r]| l != r) {
                return Err(Reason::CollectionMismatch);
            }
            self.delete_bag(id);
            for (l, r) in pairs {
                self.create_bag(l, r);
            }
            if !rest_left.is_empty() {
                let c = self.create_collection();
                for (a, nodes) in rest_left {
                    self.create_set(c, LEFT, nodes, a);
                }
                for (b, nodes) in rest_right {
                    self.create_set(c, RIGHT, nodes, b);
                }
                self.mark_dirty(c);
            }
        }
        Ok(())
    }

    /// Deduction Rule 3 on label classes: classes whose labels are already
    /// related by `f` are paired, everything else is returned.
    #[allow(clippy::type_complexity)]
    fn match_label_classes<T>(
        &self,
        mut left: BTreeMap<LabelId, T>,
        mut right: BTreeMap<LabelId, T>,
        shape: impl Fn(&T) -> Vec<usize>,
    ) -> Result<(Vec<(T, T)>, BTreeMap<LabelId, T>, BTreeMap<LabelId, T>), Reason>
    where
        T: Default,
    {
        let mapped: Vec<LabelId> = left
            .keys()
            .copied()
            .filter(|&a| self.f.get(a).is_some())
            .collect();
        let mut pairs = Vec::with_capacity(mapped.len());
        for a in mapped {
            let b = self.f.get(a).expect("filtered on mapped labels");
            let l = left.remove(&a).expect("key present");
            let Some(r) = right.remove(&b) else {
                return Err(Reason::Rule3MissingCounterpart);
            };
            let (mut sl, mut sr) = (shape(&l), shape(&r));
            sl.sort_unstable();
            sr.sort_unstable();
            if sl != sr {
                return Err(Reason::CollectionMismatch);
            }
            pairs.push((l, r));
        }
        if right.keys().any(|&b| self.f.preimage(b).is_some()) {
            return Err(Reason::Rule3MissingCounterpart);
        }
        Ok((pairs, left, right))
    }

    // ---- deduction rules ----------------------------------------------------

    /// Applies Rules 1–3 until no rule fires.
    ///
    /// Collection bookkeeping (Rules 2 and 3) always runs before the next
    /// singleton bag is mapped.
    pub(crate) fn propagate(&mut self) -> Result<(), Reason> {
        loop {
            if let Some(c) = self.dirty.pop_front() {
                self.dirty_flag[c.0 as usize] = false;
                if self.collections[c.0 as usize].is_some() {
                    self.rule2(c)?;
                }
                continue;
            }
            if self.new_labels.pop_front().is_some() {
                self.rule3_all()?;
                continue;
            }
            if let Some(b) = self.singletons.pop_front() {
                let Some(bag) = self.bags[b.0 as usize].as_ref() else {
                    continue;
                };
                if bag.size() == 1 {
                    let (u, v) = (bag.left()[0], bag.right()[0]);
                    self.map_nodes(u, v)?;
                }
                continue;
            }
            return Ok(());
        }
    }

    /// Rule 2: a cardinality with exactly one set per side becomes a bag.
    fn rule2(&mut self, c: CollectionId) -> Result<(), Reason> {
        let coll = self.collection(c);
        if coll.buckets.values().any(|[l, r]| l.len() != r.len()) {
            return Err(Reason::CollectionMismatch);
        }
        let singles: Vec<(SetId, SetId)> = coll
            .buckets
            .values()
            .filter(|[l, _]| l.len() == 1)
            .map(|[l, r]| (l[0], r[0]))
            .collect();
        for (p, q) in singles {
            let (a, b) = (self.set(p).label, self.set(q).label);
            if !self.extend_f(a, b) {
                return Err(Reason::ExtBijLabelConflict);
            }
            self.sets_to_bag(p, q);
        }
        self.drop_collection_if_empty(c);
        Ok(())
    }

    /// Rule 3 applied to every collection after `f` grew.
    fn rule3_all(&mut self) -> Result<(), Reason> {
        let ids: Vec<_> = self.collections().map(Collection::id).collect();
        for c in ids {
            self.rule3_collection(c)?;
        }
        Ok(())
    }

    fn rule3_collection(&mut self, c: CollectionId) -> Result<(), Reason> {
        let coll = self.collection(c);
        let mut left: BTreeMap<LabelId, Vec<SetId>> = BTreeMap::new();
        let mut right: BTreeMap<LabelId, Vec<SetId>> = BTreeMap::new();
        let mut total = 0;
        for [l, r] in coll.buckets.values() {
            total += l.len();
            for &s in l {
                left.entry(self.set(s).label).or_default().push(s);
            }
            for &s in r {
                right.entry(self.set(s).label).or_default().push(s);
            }
        }
        let (pairs, _, _) = self.match_label_classes(left, right, |sets| {
            sets.iter().map(|&s| self.set(s).nodes.len()).collect()
        })?;
        let mut changed = false;
        for (ls, rs) in pairs {
            if ls.len() == 1 {
                self.sets_to_bag(ls[0], rs[0]);
                changed = true;
            } else if ls.len() < total {
                // Several sets per label: they still pair only among
                // themselves, so they get their own collection.
                let fresh = self.create_collection();
                for s in ls.into_iter().chain(rs) {
                    let set = self.take_set(s);
                    self.create_set(fresh, set.side, set.nodes, set.label);
                }
                self.mark_dirty(fresh);
                changed = true;
            }
        }
        if changed {
            self.mark_dirty(c);
            self.drop_collection_if_empty(c);
        }
        Ok(())
    }

    // ---- branching support -----------------------------------------------------

    /// The open decision with the fewest alternatives, or `None` when
    /// nothing is left to decide.
    pub(crate) fn next_choice(&self) -> Option<Choice> {
        let bag = self.bags().min_by_key(|b| (b.size(), b.id));
        let coll = self
            .collections()
            .flat_map(|c| {
                c.buckets
                    .iter()
                    .map(move |(&n, s)| (s[LEFT].len(), c.id, n, s))
            })
            .min_by_key(|&(count, id, n, _)| (count, id, n));
        match (bag, coll) {
            (Some(b), Some((count, ..))) if b.size() <= count => Some(self.node_choice(b)),
            (Some(b), None) => Some(self.node_choice(b)),
            (_, Some((_, _, _, [l, r]))) => {
                let set = *l.iter().min().expect("non-empty bucket");
                let mut candidates = r.clone();
                candidates.sort_unstable();
                Some(Choice::Sets { set, candidates })
            }
            (None, None) => None,
        }
    }

    fn node_choice(&self, b: &Bag) -> Choice {
        let u = *b.left().iter().min().expect("non-empty bag");
        let mut candidates = b.right().to_vec();
        candidates.sort_unstable();
        Choice::Node { u, candidates }
    }

    /// Pairs two sets of the same collection bucket, as Rule 2 would.
    pub(crate) fn pair_sets(&mut self, p: SetId, q: SetId) -> Result<(), Reason> {
        let (sp, sq) = (self.set(p), self.set(q));
        debug_assert_eq!(sp.collection, sq.collection);
        let (a, b, c) = (sp.label, sq.label, sp.collection);
        if !self.extend_f(a, b) {
            return Err(Reason::ExtBijLabelConflict);
        }
        self.sets_to_bag(p, q);
        self.mark_dirty(c);
        self.drop_collection_if_empty(c);
        Ok(())
    }

    // ---- validation -----------------------------------------------------------

    /// Checks the structural invariants: locator totality and consistency,
    /// bag balance, collection properties, and that `phi` respects the tree
    /// structure on its domain.
    pub fn validate(&self) -> Result<(), String> {
        let [t1, t2] = self.trees;
        for side in [LEFT, RIGHT] {
            for u in self.trees[side].nodes() {
                let mapped = if side == LEFT {
                    self.phi.get(u).is_some()
                } else {
                    self.phi.preimage(u).is_some()
                };
                let at = self.pos[side][u.index()] as usize;
                match self.slot[side][u.index()] {
                    Slot::Mapped if mapped => {}
                    Slot::Mapped => {
                        return Err(format!("node {u} (side {side}) is unmapped but unplaced"))
                    }
                    _ if mapped => {
                        return Err(format!("node {u} (side {side}) is mapped but still placed"))
                    }
                    Slot::Bag(b) => {
                        let ok = self.bags[b.0 as usize]
                            .as_ref()
                            .is_some_and(|bag| bag.sides[side].get(at) == Some(&u));
                        if !ok {
                            return Err(format!(
                                "locator of node {u} (side {side}) points at stale bag {b:?}"
                            ));
                        }
                    }
                    Slot::Set(s) => {
                        let ok = self.sets[s.0 as usize].as_ref().is_some_and(|set| {
                            set.side == side
                                && set.nodes.get(at) == Some(&u)
                                && self.collections[set.collection.0 as usize]
                                    .as_ref()
                                    .and_then(|c| c.buckets.get(&set.nodes.len()))
                                    .is_some_and(|b| b[side].contains(&s))
                        });
                        if !ok {
                            return Err(format!(
                                "locator of node {u} (side {side}) points at stale set {s:?}"
                            ));
                        }
                    }
                }
            }
        }
        for bag in self.bags() {
            if bag.size() == 0 || bag.left().len() != bag.right().len() {
                return Err(format!("unbalanced or empty bag {:?}", bag.id));
            }
        }
        for coll in self.collections() {
            if coll.is_empty() {
                return Err(format!("empty collection {:?}", coll.id));
            }
            for (&n, sides) in &coll.buckets {
                if sides[LEFT].len() != sides[RIGHT].len() || sides[LEFT].is_empty() {
                    return Err(format!(
                        "collection {:?} violates #C1({n}) = #C2({n})",
                        coll.id
                    ));
                }
                for (side, tree) in [(LEFT, t1), (RIGHT, t2)] {
                    for &s in &sides[side] {
                        let set = self.set(s);
                        if set.nodes.len() != n || set.collection != coll.id {
                            return Err(format!("set {s:?} filed under the wrong cardinality"));
                        }
                        if set.nodes.iter().any(|&x| tree.label_id(x) != set.label) {
                            return Err(format!("set {s:?} is not label-uniform"));
                        }
                    }
                }
            }
        }
        for (u, v) in self.phi.iter() {
            match (t1.parent(u), t2.parent(v)) {
                (None, None) => {}
                (Some(pu), Some(pv)) if self.phi.contains(pu, pv) => {}
                _ => {
                    return Err(format!(
                        "phi maps {u} to {v} without mapping their parents together"
                    ))
                }
            }
            if self.f.get(t1.label_id(u)) != Some(t2.label_id(v)) {
                return Err(format!("f disagrees with the labels of {u} -> {v}"));
            }
        }
        Ok(())
    }
}
