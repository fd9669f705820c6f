//! Benchmark grid: one engine run per `(n, alphabet, replicate)` cell, with
//! the measured quantities written as CSV rows.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{self, EngineOptions};
use crate::randgen::{self, GenConfig, GenError, Scenario};

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "TREECIPHER_WORKERS";

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub alphabet_size: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub verdict: String,
    pub wall_time_ns: u128,
    #[serde(rename = "log10_N_final")]
    pub log10_n_final: f64,
    #[serde(rename = "log10_N_equiv")]
    pub log10_n_equiv: f64,
    pub r_final: f64,
    pub map_nodes_calls: usize,
}

pub const CSV_HEADER: &str =
    "n,alphabet_size,seed,scenario,verdict,wall_time_ns,log10_N_final,log10_N_equiv,r_final,map_nodes_calls";

/// A row plus the per-stage sizes and validator messages, which stay out
/// of the CSV.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub record: BenchRecord,
    pub stage_log10: Vec<f64>,
    pub validation_errors: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub sizes: Vec<usize>,
    pub alphabets: Vec<usize>,
    pub replicates: usize,
    pub scenario: Scenario,
    pub base_seed: u64,
    /// Also rerun each cell, untimed, with the structural validator on.
    pub validate: bool,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one cell: SplitMix64 folded over `(base, n, alphabet, replicate)`.
pub fn cell_seed(base: u64, n: usize, alphabet_size: usize, replicate: usize) -> u64 {
    [n as u64, alphabet_size as u64, replicate as u64]
        .into_iter()
        .fold(splitmix64(base), |h, x| splitmix64(h ^ x))
}

/// Runs one cell. Only `engine::run` is inside the timed region.
pub fn run_cell(
    cfg: &GenConfig,
    scenario: Scenario,
    validate: bool,
) -> Result<CellResult, GenError> {
    let (t1, t2) = randgen::scenario_pair(cfg, scenario)?;
    let opts = EngineOptions {
        validate: false,
        ..EngineOptions::default()
    };
    let start = Instant::now();
    let report = engine::run(&t1, &t2, &opts);
    let wall_time_ns = start.elapsed().as_nanos();

    let validation_errors = if validate {
        let checked = engine::run(
            &t1,
            &t2,
            &EngineOptions {
                validate: true,
                ..opts
            },
        );
        checked
            .validation_errors
            .into_iter()
            .map(|(stage, e)| format!("{}: {e}", stage.name()))
            .collect()
    } else {
        Vec::new()
    };

    let log10_n_equiv = report.log10_n_equiv;
    let log10_n_final = report.log10_n_final();
    Ok(CellResult {
        record: BenchRecord {
            n: cfg.n,
            alphabet_size: cfg.alphabet_size,
            seed: cfg.seed,
            scenario,
            verdict: report.outcome.verdict().as_str().to_owned(),
            wall_time_ns,
            log10_n_final,
            log10_n_equiv,
            r_final: log10_n_final - log10_n_equiv,
            map_nodes_calls: report.map_nodes_calls,
        },
        stage_log10: report.stages.iter().map(|s| s.log10_n).collect(),
        validation_errors,
    })
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

impl Grid {
    pub fn cells(&self) -> Result<Vec<GenConfig>, GenError> {
        let mut cells =
            Vec::with_capacity(self.sizes.len() * self.alphabets.len() * self.replicates);
        for &n in &self.sizes {
            for &a in &self.alphabets {
                for r in 0..self.replicates {
                    cells.push(GenConfig::new(n, a, cell_seed(self.base_seed, n, a, r))?);
                }
            }
        }
        Ok(cells)
    }

    /// Runs every cell on `workers` threads. Results are sorted by
    /// `(n, alphabet, seed)` whatever the scheduling.
    pub fn run(&self, workers: usize) -> Result<Vec<CellResult>, GenError> {
        let cells = self.cells()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        let mut out: Vec<CellResult> = pool.install(|| {
            cells
                .par_iter()
                .map(|cfg| run_cell(cfg, self.scenario, self.validate))
                .collect::<Result<_, _>>()
        })?;
        out.sort_by_key(|c| (c.record.n, c.record.alphabet_size, c.record.seed));
        Ok(out)
    }
}

pub fn write_csv<W: Write>(
    w: W,
    records: impl IntoIterator<Item = BenchRecord>,
) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> csv::Result<Vec<BenchRecord>> {
    csv::Reader::from_reader(r).deserialize().collect()
}
