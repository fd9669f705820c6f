//! Seeded generators for the experiment protocol: random recursive trees,
//! uniform labeling, child shuffling and single-label perturbation.
//!
//! Every draw comes from ChaCha8 seeded with the 64-bit seed, on a stream
//! reserved for its purpose, so changing how shapes are drawn never shifts
//! the labels drawn for the same seed.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{Label, LabeledTree, NodeId, TreeBuilder};

const SHAPE: u64 = 1;
const LABELS: u64 = 2;
const SHUFFLE: u64 = 3;
const PERTURB: u64 = 4;
const CIPHER: u64 = 5;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("tree size must be at least 1")]
    EmptyTree,
    #[error("alphabet size must be at least 1")]
    EmptyAlphabet,
    #[error("cannot perturb a tree whose nodes all carry the same label")]
    SingleLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub alphabet_size: usize,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(n: usize, alphabet_size: usize, seed: u64) -> Result<Self, GenError> {
        if n == 0 {
            return Err(GenError::EmptyTree);
        }
        if alphabet_size == 0 {
            return Err(GenError::EmptyAlphabet);
        }
        Ok(GenConfig {
            n,
            alphabet_size,
            seed,
        })
    }
}

/// `A, B, ..., Z, AA, AB, ...`
pub fn symbol_name(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// The first `size` symbols of the generated alphabet.
pub fn alphabet(size: usize) -> Vec<Label> {
    (0..size)
        .map(|i| Label::new(&symbol_name(i)).expect("valid symbol"))
        .collect()
}

/// Node `i` attaches below a uniformly chosen earlier node. Every node is
/// labeled `A`.
pub fn random_recursive_tree(cfg: &GenConfig) -> LabeledTree {
    let mut r = rng(cfg.seed, SHAPE);
    let label = Label::new("A").expect("valid symbol");
    let mut b = TreeBuilder::with_capacity(cfg.n);
    let mut created = vec![b.root(label.clone()).expect("fresh builder")];
    for i in 1..cfg.n {
        let parent = created[r.random_range(0..i)];
        created.push(b.child(parent, label.clone()).expect("parent exists"));
    }
    b.build().expect("non-empty")
}

/// Replaces every label by an independent uniform draw from the first
/// `alphabet_size` symbols.
pub fn assign_labels(t: &LabeledTree, cfg: &GenConfig) -> LabeledTree {
    let mut r = rng(cfg.seed, LABELS);
    let symbols = alphabet(cfg.alphabet_size);
    let drawn: Vec<Label> = t
        .nodes()
        .map(|_| symbols.choose(&mut r).expect("non-empty alphabet").clone())
        .collect();
    t.relabeled(|u| drawn[u.index()].clone())
}

/// The same tree with each node's children independently shuffled, node
/// ids renumbered to the new preorder.
pub fn shuffled_copy(t: &LabeledTree, seed: u64) -> LabeledTree {
    let mut r = rng(seed, SHUFFLE);
    t.rebuild_from(t.root(), |_, kids| {
        let mut kids = kids.to_vec();
        kids.shuffle(&mut r);
        kids
    })
}

/// Gives one uniformly chosen node a different label drawn uniformly from
/// the other labels already present in `t`.
pub fn perturb_one_label(t: &LabeledTree, seed: u64) -> Result<LabeledTree, GenError> {
    let present: Vec<Label> = t.alphabet().into_iter().collect();
    if present.len() < 2 {
        return Err(GenError::SingleLabel);
    }
    let mut r = rng(seed, PERTURB);
    let u = NodeId(r.random_range(0..t.len() as u32));
    let others: Vec<&Label> = present.iter().filter(|l| *l != t.label(u)).collect();
    let label = (*others.choose(&mut r).expect("at least one other label")).clone();
    Ok(t.with_label(u, label))
}

/// Renames the alphabet of `t` through a random bijection onto lowercase
/// symbols `x0, x1, ...`.
pub fn apply_random_cipher(t: &LabeledTree, seed: u64) -> LabeledTree {
    let mut r = rng(seed, CIPHER);
    let present: Vec<Label> = t.alphabet().into_iter().collect();
    let mut images: Vec<usize> = (0..present.len()).collect();
    images.shuffle(&mut r);
    t.relabeled(|u| {
        let i = present.binary_search(t.label(u)).expect("label of t");
        Label::new(&format!("x{}", images[i])).expect("valid symbol")
    })
}

/// A random recursive tree of size `cfg.n` with uniform labels.
pub fn labeled_tree(cfg: &GenConfig) -> LabeledTree {
    assign_labels(&random_recursive_tree(cfg), cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `T2` is a shuffled copy of `T1`.
    Similar,
    /// As `Similar`, then one label of `T2` is changed.
    Perturbed,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Similar => "similar",
            Scenario::Perturbed => "perturbed",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "similar" => Ok(Scenario::Similar),
            "perturbed" => Ok(Scenario::Perturbed),
            _ => Err(format!(
                "unknown scenario {s:?}, expected similar or perturbed"
            )),
        }
    }
}

/// One `(T1, T2)` couple of the experiment protocol.
pub fn scenario_pair(
    cfg: &GenConfig,
    scenario: Scenario,
) -> Result<(LabeledTree, LabeledTree), GenError> {
    let t1 = labeled_tree(cfg);
    let t2 = shuffled_copy(&t1, cfg.seed);
    let t2 = match scenario {
        Scenario::Similar => t2,
        Scenario::Perturbed => perturb_one_label(&t2, cfg.seed)?,
    };
    Ok((t1, t2))
}
