//! Partial bijections over dense index spaces, and the label-side cipher
//! that layers a [`CipherMode`] on top.

use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use crate::tree::{LabelId, LabeledTree, NodeId};

/// Types usable as keys or values of a [`PartialBijection`].
pub trait DenseIndex: Copy + Eq {
    fn index(self) -> usize;
    fn from_index(i: usize) -> Self;
}

impl DenseIndex for NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }
    fn from_index(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl DenseIndex for LabelId {
    fn index(self) -> usize {
        self.0 as usize
    }
    fn from_index(i: usize) -> Self {
        LabelId(i as u32)
    }
}

/// An injective map from a subset of `K` into `V`, with its inverse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialBijection<K, V> {
    forward: Vec<Option<u32>>,
    inverse: Vec<Option<u32>>,
    len: usize,
    _marker: PhantomData<(K, V)>,
}

impl<K: DenseIndex, V: DenseIndex> PartialBijection<K, V> {
    pub fn new(domain_size: usize, codomain_size: usize) -> Self {
        PartialBijection {
            forward: vec![None; domain_size],
            inverse: vec![None; codomain_size],
            len: 0,
            _marker: PhantomData,
        }
    }

    pub fn get(&self, a: K) -> Option<V> {
        self.forward[a.index()].map(|b| V::from_index(b as usize))
    }

    pub fn preimage(&self, b: V) -> Option<K> {
        self.inverse[b.index()].map(|a| K::from_index(a as usize))
    }

    pub fn contains(&self, a: K, b: V) -> bool {
        self.forward[a.index()] == Some(b.index() as u32)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// True when every key of the domain is mapped.
    pub fn is_total(&self) -> bool {
        self.len == self.forward.len()
    }

    /// Pairs in ascending key order.
    pub fn iter(&self) -> impl Iterator<Item = (K, V)> + '_ {
        self.forward
            .iter()
            .enumerate()
            .filter_map(|(a, b)| b.map(|b| (K::from_index(a), V::from_index(b as usize))))
    }

    /// Compatibility test with extension: true iff `a` already maps to `b`,
    /// or `a` is unmapped and `b` is not in the image. In the latter case
    /// the pair is added.
    pub fn ext_bij(&mut self, a: K, b: V) -> bool {
        match self.forward[a.index()] {
            Some(img) => img as usize == b.index(),
            None if self.inverse[b.index()].is_some() => false,
            None => {
                self.forward[a.index()] = Some(b.index() as u32);
                self.inverse[b.index()] = Some(a.index() as u32);
                self.len += 1;
                true
            }
        }
    }
}

/// Which label substitutions are admissible.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CipherMode {
    /// Any bijection between the two alphabets.
    #[default]
    Bijective,
    /// Only the identity: labels must match exactly.
    Identity,
}

impl std::str::FromStr for CipherMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bijective" => Ok(CipherMode::Bijective),
            "identity" => Ok(CipherMode::Identity),
            other => Err(format!(
                "unknown cipher mode {other:?} (expected bijective or identity)"
            )),
        }
    }
}

/// The partial label bijection `f` between two trees' alphabets.
#[derive(Clone, Debug)]
pub struct LabelCipher {
    map: PartialBijection<LabelId, LabelId>,
    mode: CipherMode,
    // For Identity mode: the right-hand id carrying the same symbol.
    same_symbol: Vec<Option<LabelId>>,
}

impl LabelCipher {
    /// In Identity mode every symbol shared by both alphabets starts out
    /// mapped to itself, since no other image is admissible.
    pub fn new(t1: &LabeledTree, t2: &LabeledTree, mode: CipherMode) -> Self {
        let same_symbol: Vec<Option<LabelId>> = t1
            .symbols()
            .iter()
            .map(|s| t2.label_id_of(s.as_str()))
            .collect();
        let mut map = PartialBijection::new(t1.symbols().len(), t2.symbols().len());
        if mode == CipherMode::Identity {
            for (a, b) in same_symbol.iter().enumerate() {
                if let Some(b) = b {
                    map.ext_bij(LabelId(a as u32), *b);
                }
            }
        }
        LabelCipher {
            map,
            mode,
            same_symbol,
        }
    }

    pub fn mode(&self) -> CipherMode {
        self.mode
    }

    pub fn admits(&self, a: LabelId, b: LabelId) -> bool {
        match self.mode {
            CipherMode::Bijective => true,
            CipherMode::Identity => self.same_symbol[a.index()] == Some(b),
        }
    }

    /// [`PartialBijection::ext_bij`] restricted by the mode.
    pub fn ext_bij(&mut self, a: LabelId, b: LabelId) -> bool {
        self.admits(a, b) && self.map.ext_bij(a, b)
    }

    pub fn get(&self, a: LabelId) -> Option<LabelId> {
        self.map.get(a)
    }

    pub fn preimage(&self, b: LabelId) -> Option<LabelId> {
        self.map.preimage(b)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LabelId, LabelId)> + '_ {
        self.map.iter()
    }
}
