//! JSON form of a run's outcome.

use serde::{Deserialize, Serialize};

use super::{EngineState, Outcome, RunReport, StageMetric};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StageJson {
    pub name: String,
    #[serde(rename = "log10_N")]
    pub log10_n: f64,
    /// Exact size as a decimal string, when small enough to print.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BagJson {
    pub left: Vec<u32>,
    pub right: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BucketJson {
    pub size: usize,
    pub left: Vec<Vec<u32>>,
    pub right: Vec<Vec<u32>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CollectionJson {
    pub buckets: Vec<BucketJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResidualJson {
    pub bags: Vec<BagJson>,
    pub collections: Vec<CollectionJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OutcomeJson {
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<[u32; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<[String; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<ResidualJson>,
    #[serde(rename = "log10_N_final")]
    pub log10_n_final: f64,
    #[serde(rename = "log10_N_equiv")]
    pub log10_n_equiv: f64,
    pub r_final: f64,
    pub stages: Vec<StageJson>,
    pub map_nodes_calls: usize,
}

fn sorted(nodes: &[crate::tree::NodeId]) -> Vec<u32> {
    let mut v: Vec<u32> = nodes.iter().map(|u| u.0).collect();
    v.sort_unstable();
    v
}

impl ResidualJson {
    pub fn from_state(state: &EngineState<'_>) -> Self {
        let bags = state
            .bags()
            .map(|b| BagJson {
                left: sorted(b.left()),
                right: sorted(b.right()),
            })
            .collect();
        let collections = state
            .collections()
            .map(|c| CollectionJson {
                buckets: c
                    .counts()
                    .map(|(n, _)| {
                        let side = |s| {
                            state
                                .collection_sets(c, n, s)
                                .into_iter()
                                .map(sorted)
                                .collect()
                        };
                        BucketJson {
                            size: n,
                            left: side(0),
                            right: side(1),
                        }
                    })
                    .collect(),
            })
            .collect();
        ResidualJson { bags, collections }
    }
}

impl From<&StageMetric> for StageJson {
    fn from(m: &StageMetric) -> Self {
        StageJson {
            name: m.stage.name().to_owned(),
            log10_n: m.log10_n,
            exact: m.exact.as_ref().map(ToString::to_string),
        }
    }
}

impl OutcomeJson {
    /// JSON for `outcome`, which may differ from `report.outcome` when the
    /// residual space was completed afterwards.
    pub fn new(outcome: &Outcome<'_>, report: &RunReport<'_>) -> Self {
        let log10_n_final = match outcome {
            Outcome::Isomorphic(_) => 0.0,
            _ => report.log10_n_final(),
        };
        let mut json = OutcomeJson {
            verdict: outcome.verdict().as_str().to_owned(),
            reason: None,
            phi: None,
            f: None,
            residual: None,
            log10_n_final,
            log10_n_equiv: report.log10_n_equiv,
            r_final: log10_n_final - report.log10_n_equiv,
            stages: report.stages.iter().map(StageJson::from).collect(),
            map_nodes_calls: report.map_nodes_calls,
        };
        match outcome {
            Outcome::Isomorphic(c) => {
                json.phi = Some(
                    c.phi
                        .iter()
                        .enumerate()
                        .map(|(u, v)| [u as u32, v.0])
                        .collect(),
                );
                json.f = Some(
                    c.f.iter()
                        .map(|(a, b)| [a.to_string(), b.to_string()])
                        .collect(),
                );
            }
            Outcome::NotIsomorphic(reason) => json.reason = Some(reason.as_str().to_owned()),
            Outcome::Undecided(state) => {
                let (t1, t2) = state.trees();
                json.phi = Some(state.phi().iter().map(|(u, v)| [u.0, v.0]).collect());
                json.f = Some(
                    state
                        .f()
                        .iter()
                        .map(|(a, b)| [t1.symbol(a).to_string(), t2.symbol(b).to_string()])
                        .collect(),
                );
                json.residual = Some(ResidualJson::from_state(state));
            }
        }
        json
    }
}

impl RunReport<'_> {
    pub fn to_json(&self) -> OutcomeJson {
        OutcomeJson::new(&self.outcome, self)
    }
}
