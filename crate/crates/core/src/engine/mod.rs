//! The reduction engine.
//!
//! Starting from a single bag holding every node of both trees, four
//! filters (depth, parent signature, equivalence class, labels) refine the
//! candidate groups. Between filters the deduction rules map forced pairs,
//! and every mapping carves the children of the mapped nodes out of their
//! groups. What is left at the end is the residual search space.

mod report;
mod state;

use std::fmt;
use std::time::Instant;

use num_bigint::BigUint;
use serde::Serialize;

pub use report::{OutcomeJson, ResidualJson, StageJson};
pub(crate) use state::Choice;
pub use state::{Bag, BagId, Collection, CollectionId, EngineState, SetId};

use crate::ahu::{self, ColorId};
use crate::bijection::CipherMode;
use crate::combinatorics::{digits_upper_bound, log10_binomial};
use crate::tree::{Label, LabeledTree, NodeId};

/// Why a run concluded that no tree ciphering exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    ExtBijNodeConflict,
    ExtBijLabelConflict,
    BagCardinalityMismatch,
    CollectionMismatch,
    Rule3MissingCounterpart,
    TopologyMismatch,
    /// Every completion of the residual space was tried and failed.
    SearchExhausted,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::ExtBijNodeConflict => "ext_bij_node_conflict",
            Reason::ExtBijLabelConflict => "ext_bij_label_conflict",
            Reason::BagCardinalityMismatch => "bag_cardinality_mismatch",
            Reason::CollectionMismatch => "collection_mismatch",
            Reason::Rule3MissingCounterpart => "rule3_missing_counterpart",
            Reason::TopologyMismatch => "topology_mismatch",
            Reason::SearchExhausted => "search_exhausted",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Filter stages, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Depth,
    Parents,
    EquivClass,
    Labels,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::Depth => "depth",
            Stage::Parents => "parents",
            Stage::EquivClass => "equiv_class",
            Stage::Labels => "labels",
        }
    }
}

/// Search-space size recorded after a stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageMetric {
    pub stage: Stage,
    pub log10_n: f64,
    /// Present when the value has fewer digits than the configured cap.
    pub exact: Option<BigUint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Bag,
    /// Pre-split `(#C(n), #C(part), #C(n - part))` of the collection.
    Collection {
        counts: (usize, usize, usize),
    },
}

/// One container cut by SplitChildren, with the search-space size around
/// the cut.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitEvent {
    pub kind: SplitKind,
    pub whole: usize,
    pub part: usize,
    pub log10_before: f64,
    pub log10_after: f64,
}

impl SplitEvent {
    /// `log10` of the factor by which the cut shrinks the search space.
    pub fn predicted_log10_reduction(&self) -> f64 {
        let (n, p) = (self.whole, self.part);
        let q = n - p;
        let binom = log10_binomial(n, p);
        match self.kind {
            SplitKind::Bag => binom,
            SplitKind::Collection {
                counts: (cn, cp, cq),
            } => {
                // Both pieces land in the same bucket when p == q.
                let grown = if p == q {
                    ((cp + 1) * (cp + 2)) as f64
                } else {
                    ((cp + 1) * (cq + 1)) as f64
                };
                binom + (cn as f64).log10() - grown.log10()
            }
        }
    }

    pub fn observed_log10_reduction(&self) -> f64 {
        self.log10_before - self.log10_after
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EngineOptions {
    pub mode: CipherMode,
    /// Exact search-space sizes are only materialized below this many
    /// decimal digits.
    pub exact_digit_cap: usize,
    /// Record every SplitChildren cut with before/after sizes.
    pub record_splits: bool,
    /// Run the structural validator after every stage.
    pub validate: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            mode: CipherMode::Bijective,
            exact_digit_cap: 10_000,
            record_splits: false,
            validate: cfg!(debug_assertions),
        }
    }
}

impl EngineOptions {
    pub fn with_mode(mode: CipherMode) -> Self {
        EngineOptions {
            mode,
            ..Default::default()
        }
    }
}

/// A complete tree ciphering: `phi[u]` is the image of node `u`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cipher {
    pub phi: Vec<NodeId>,
    pub f: Vec<(Label, Label)>,
}

pub enum Outcome<'a> {
    Isomorphic(Cipher),
    NotIsomorphic(Reason),
    Undecided(Box<EngineState<'a>>),
}

impl Outcome<'_> {
    pub fn verdict(&self) -> Verdict {
        match self {
            Outcome::Isomorphic(_) => Verdict::Isomorphic,
            Outcome::NotIsomorphic(_) => Verdict::NotIsomorphic,
            Outcome::Undecided(_) => Verdict::Undecided,
        }
    }

    pub fn residual(&self) -> Option<&EngineState<'_>> {
        match self {
            Outcome::Undecided(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Debug for Outcome<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Isomorphic(c) => f.debug_tuple("Isomorphic").field(c).finish(),
            Outcome::NotIsomorphic(r) => f.debug_tuple("NotIsomorphic").field(r).finish(),
            Outcome::Undecided(s) => {
                write!(f, "Undecided(log10 N = {:.3})", s.log10_search_space())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Isomorphic,
    NotIsomorphic,
    Undecided,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Isomorphic => "isomorphic",
            Verdict::NotIsomorphic => "not_isomorphic",
            Verdict::Undecided => "undecided",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunReport<'a> {
    pub outcome: Outcome<'a>,
    pub stages: Vec<StageMetric>,
    pub log10_n_equiv: f64,
    pub map_nodes_calls: usize,
    pub splits: Vec<SplitEvent>,
    /// Structural validator failures, tagged with the stage they followed.
    pub validation_errors: Vec<(Stage, String)>,
}

impl RunReport<'_> {
    /// `log10 N(B, C)` at the end of the run: 0 when fully mapped, the last
    /// recorded stage otherwise.
    pub fn log10_n_final(&self) -> f64 {
        match &self.outcome {
            Outcome::Isomorphic(_) => 0.0,
            Outcome::Undecided(s) => s.log10_search_space(),
            Outcome::NotIsomorphic(_) => self.stages.last().map_or(0.0, |s| s.log10_n),
        }
    }

    /// `log10 (N(B, C) / N≡(T1))` at the end of the run.
    pub fn r_final(&self) -> f64 {
        self.log10_n_final() - self.log10_n_equiv
    }
}

/// `log10 (N(B, C) / N≡(T1))` for the current state.
pub fn log_ratio(state: &EngineState<'_>, log10_n_equiv: f64) -> f64 {
    state.log10_search_space() - log10_n_equiv
}

/// `N(B, C)`: exact when below `digit_cap` digits, always in log form.
pub fn search_space_size(state: &EngineState<'_>, digit_cap: usize) -> (Option<BigUint>, f64) {
    let log10 = state.log10_search_space();
    let exact = (digits_upper_bound(log10) <= digit_cap).then(|| state.exact_search_space());
    (exact, log10)
}

/// Runs the full reduction on `t1` and `t2`.
pub fn run<'a>(t1: &'a LabeledTree, t2: &'a LabeledTree, opts: &EngineOptions) -> RunReport<'a> {
    let mut table = ahu::ColorTable::new();
    let colors = [table.color_tree(t1), table.color_tree(t2)];
    let log10_n_equiv = ahu::n_equiv_log10(t1, &colors[0]);
    let mut report = RunReport {
        outcome: Outcome::NotIsomorphic(Reason::TopologyMismatch),
        stages: Vec::new(),
        log10_n_equiv,
        map_nodes_calls: 0,
        splits: Vec::new(),
        validation_errors: Vec::new(),
    };
    if t1.len() != t2.len() || colors[0][t1.root().index()] != colors[1][t2.root().index()] {
        return report;
    }

    let mut state = EngineState::new(t1, t2, colors, opts.mode, opts.record_splits);
    let result = run_stages(&mut state, opts, &mut report);
    report.map_nodes_calls = state.map_nodes_calls();
    report.splits = state.take_splits();
    report.outcome = match result {
        Err(reason) => Outcome::NotIsomorphic(reason),
        Ok(()) if state.is_complete() => Outcome::Isomorphic(cipher_of(&state)),
        Ok(()) => Outcome::Undecided(Box::new(state)),
    };
    report
}

fn run_stages(
    state: &mut EngineState<'_>,
    opts: &EngineOptions,
    report: &mut RunReport<'_>,
) -> Result<(), Reason> {
    let (t1, t2) = state.trees();
    let depths = [t1.depths(), t2.depths()];
    let trees = [t1, t2];
    let mut record = |state: &EngineState<'_>, stage: Stage| {
        let (exact, log10_n) = search_space_size(state, opts.exact_digit_cap);
        report.stages.push(StageMetric {
            stage,
            log10_n,
            exact,
        });
        if opts.validate {
            if let Err(e) = state.validate() {
                report.validation_errors.push((stage, e));
            }
        }
    };

    record(state, Stage::Initial);

    state.refine_bags(|side, u| depths[side][u.index()])?;
    state.propagate()?;
    record(state, Stage::Depth);

    // Grouping by the parent's color is grouping by its children
    // signature: a color is the interned signature.
    let colors = [state.colors(0).to_vec(), state.colors(1).to_vec()];
    state.refine_bags(|side, u| trees[side].parent(u).map(|p| colors[side][p.index()]))?;
    state.propagate()?;
    record(state, Stage::Parents);

    state.refine_bags(|side, u| -> ColorId { colors[side][u.index()] })?;
    state.propagate()?;
    record(state, Stage::EquivClass);

    state.labels_filter()?;
    state.propagate()?;
    record(state, Stage::Labels);
    Ok(())
}

/// Extracts the complete ciphering from a fully mapped state.
pub(crate) fn cipher_of(state: &EngineState<'_>) -> Cipher {
    let (t1, t2) = state.trees();
    let phi = t1
        .nodes()
        .map(|u| state.phi().get(u).expect("complete mapping"))
        .collect();
    let f = state
        .f()
        .iter()
        .map(|(a, b)| (t1.symbol(a).clone(), t2.symbol(b).clone()))
        .collect();
    Cipher { phi, f }
}

/// Convenience wrapper timing only the reduction itself.
pub fn run_timed<'a>(
    t1: &'a LabeledTree,
    t2: &'a LabeledTree,
    opts: &EngineOptions,
) -> (RunReport<'a>, u128) {
    let start = Instant::now();
    let report = run(t1, t2, opts);
    (report, start.elapsed().as_nanos())
}
