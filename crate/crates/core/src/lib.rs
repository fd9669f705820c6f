//! Substitution-cipher isomorphism of unordered labeled trees.
//!
//! Two labeled trees are equivalent when some tree isomorphism between them
//! induces a bijection between their alphabets. The [`engine`] deduces, in
//! roughly linear time, which node and label pairs are forced and how large
//! the remaining search space is; the [`oracle`] module holds brute-force
//! ground truth and a backtracking completer for what the engine leaves
//! open.
//!
//! ```
//! use treecipher::{engine, LabeledTree, Verdict};
//!
//! let t1 = LabeledTree::parse("A(B(A),B(C))").unwrap();
//! let t2 = LabeledTree::parse("x(y(x),y(z))").unwrap();
//! let report = engine::run(&t1, &t2, &engine::EngineOptions::default());
//! assert_eq!(report.outcome.verdict(), Verdict::Isomorphic);
//! ```

pub mod ahu;
pub mod bijection;
pub mod combinatorics;
pub mod engine;
pub mod experiment;
mod format;
pub mod oracle;
pub mod randgen;
pub mod tree;

pub use ahu::{color, n_equiv, topologically_isomorphic, ColorId, Coloring};
pub use bijection::{CipherMode, LabelCipher, PartialBijection};
pub use engine::{run, EngineOptions, EngineState, Outcome, Reason, RunReport, Verdict};
pub use tree::{Label, LabelId, LabeledTree, NodeId, TreeBuilder, TreeError};
