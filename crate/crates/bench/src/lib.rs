//! Fixtures shared by the criterion benches.

use treecipher::randgen::{self, GenConfig, Scenario};
use treecipher::LabeledTree;

/// A `(T1, T2)` pair following the experiment protocol.
pub fn pair(
    n: usize,
    alphabet_size: usize,
    seed: u64,
    scenario: Scenario,
) -> (LabeledTree, LabeledTree) {
    let cfg = GenConfig::new(n, alphabet_size, seed).expect("valid config");
    randgen::scenario_pair(&cfg, scenario).expect("alphabet large enough")
}
