//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use treecipher::engine::{EngineOptions, Outcome, SplitKind};
use treecipher::experiment::{cell_seed, run_cell, CellResult};
use treecipher::oracle::{
    complete_backtracking, decide_brute, enumerate_isomorphisms, is_ciphering, is_tree_isomorphism,
    DEFAULT_ENUMERATION_CAP,
};
use treecipher::randgen::{self, GenConfig, Scenario};
use treecipher::{ahu, engine, CipherMode, LabeledTree, NodeId, Verdict};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tree(s: &str) -> LabeledTree {
    LabeledTree::parse(s).unwrap()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn quiet() -> EngineOptions {
    EngineOptions {
        validate: false,
        ..EngineOptions::default()
    }
}

fn golden_trace() -> Check {
    let t1 = tree("B(C,A(C,C),A(A,B))");
    let t2 = tree("β(α(α,β),α(γ,γ),γ)");
    let (u, v) = (t1.bfs_order(), t2.bfs_order());
    let report = engine::run(&t1, &t2, &EngineOptions::default());
    let sizes: Vec<String> = report
        .stages
        .iter()
        .map(|s| s.exact.as_ref().map_or("-".into(), ToString::to_string))
        .collect();
    ensure(sizes == ["40320", "144", "144", "48", "2"], || {
        format!("stage sizes {sizes:?}")
    })?;
    let Outcome::Undecided(state) = &report.outcome else {
        return Err(format!("outcome {:?}", report.outcome));
    };
    let phi: BTreeSet<(NodeId, NodeId)> = state.phi().iter().collect();
    let want: BTreeSet<_> = [(1, 1), (2, 4), (3, 3), (4, 2), (7, 5), (8, 6)]
        .iter()
        .map(|&(a, b)| (u[a - 1], v[b - 1]))
        .collect();
    ensure(phi == want, || format!("phi {phi:?}"))?;
    let f: BTreeSet<(String, String)> = state
        .f()
        .iter()
        .map(|(a, b)| (t1.symbol(a).to_string(), t2.symbol(b).to_string()))
        .collect();
    let want_f: BTreeSet<(String, String)> = [("A", "α"), ("B", "β"), ("C", "γ")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    ensure(f == want_f, || format!("f {f:?}"))?;
    let bags: Vec<_> = state.bags().map(|b| b.size()).collect();
    ensure(bags == [2] && state.collection_count() == 0, || {
        format!("residual bags {bags:?}")
    })?;

    let mut times: Vec<f64> = (0..101)
        .map(|_| {
            let start = Instant::now();
            let r = engine::run(&t1, &t2, &quiet());
            let t = start.elapsed();
            std::hint::black_box(r);
            t.as_secs_f64()
        })
        .collect();
    let med = median(&mut times);
    ensure(med < 1e-3, || format!("median runtime {:.3} ms", med * 1e3))?;
    Ok(format!(
        "N = 40320 -> 144 -> 144 -> 48 -> 2, median run {:.1} us",
        med * 1e6
    ))
}

fn n_equiv_golden() -> Check {
    let count = |s: &str| {
        let t = tree(s);
        let c = ahu::color(&[&t]);
        ahu::n_equiv(&t, c.colors(0)).exact
    };
    let cherries = count("R(X(L,L),X(L,L))");
    let worked_example = count("B(C,A(C,C),A(A,B))");
    ensure(
        cherries == 8u32.into() && worked_example == 8u32.into(),
        || format!("{cherries} / {worked_example}"),
    )?;
    for s in ["A", "A(B)", "A(B(C(D(E(F)))))"] {
        ensure(count(s) == 1u32.into(), || format!("path {s}"))?;
    }
    Ok("two cherries = 8, worked example T1 = 8, paths = 1".into())
}

fn oracle_count() -> Check {
    let start = Instant::now();
    for seed in 0..500u64 {
        let n = 1 + (seed % 7) as usize;
        let t = randgen::random_recursive_tree(&GenConfig::new(n, 1, seed).unwrap());
        let s = randgen::shuffled_copy(&t, seed ^ 0xabcd);
        let c = ahu::color(&[&t, &s]);
        let count = enumerate_isomorphisms(&t, &s, &c).count();
        let expected = ahu::n_equiv(&t, c.colors(0)).exact;
        ensure(num_bigint::BigUint::from(count) == expected, || {
            format!("{}: {count} witnesses, N = {expected}", t.serialize())
        })?;
    }
    let el = start.elapsed();
    ensure(el < Duration::from_secs(30), || format!("took {el:?}"))?;
    Ok(format!("500 trees, {:.2} s", el.as_secs_f64()))
}

fn decision_equivalence() -> Check {
    let start = Instant::now();
    let (mut pairs, mut positives, mut undecided) = (0, 0, 0);
    let mut seed = 0u64;
    while pairs < 1000 {
        seed += 1;
        let n = 1 + (seed % 8) as usize;
        let a = 1 + (seed / 8 % 3) as usize;
        let scenario = if seed.is_multiple_of(2) {
            Scenario::Similar
        } else {
            Scenario::Perturbed
        };
        let Ok((t1, t2)) = randgen::scenario_pair(&GenConfig::new(n, a, seed).unwrap(), scenario)
        else {
            continue;
        };
        pairs += 1;
        let (truth, _) = decide_brute(&t1, &t2, CipherMode::Bijective, DEFAULT_ENUMERATION_CAP)
            .map_err(|e| e.to_string())?;
        let report = engine::run(&t1, &t2, &quiet());
        let outcome = match report.outcome {
            Outcome::Undecided(state) => {
                undecided += 1;
                complete_backtracking(*state)
            }
            other => other,
        };
        let got = outcome.verdict() == Verdict::Isomorphic;
        positives += usize::from(truth);
        ensure(got == truth, || {
            format!(
                "{} vs {}: engine {got}, oracle {truth}",
                t1.serialize(),
                t2.serialize()
            )
        })?;
    }
    let el = start.elapsed();
    ensure(el < Duration::from_secs(60), || format!("took {el:?}"))?;
    Ok(format!(
        "1000 pairs ({positives} equivalent, {undecided} needed backtracking), {:.2} s",
        el.as_secs_f64()
    ))
}

fn equivalent(t1: &LabeledTree, t2: &LabeledTree) -> Result<bool, String> {
    decide_brute(t1, t2, CipherMode::Bijective, DEFAULT_ENUMERATION_CAP)
        .map(|(ok, _)| ok)
        .map_err(|e| e.to_string())
}

fn cipherings(t1: &LabeledTree, t2: &LabeledTree) -> Vec<treecipher::oracle::IsomorphismWitness> {
    let c = ahu::color(&[t1, t2]);
    enumerate_isomorphisms(t1, t2, &c)
        .filter(|w| is_ciphering(w, CipherMode::Bijective))
        .collect()
}

fn theorem_properties() -> Check {
    for seed in 0..200u64 {
        let n = 1 + (seed % 9) as usize;
        let t = randgen::labeled_tree(&GenConfig::new(n, 3, seed).unwrap());
        ensure(equivalent(&t, &t)?, || {
            format!("not reflexive on {}", t.serialize())
        })?;
    }
    let (mut compositions, mut inversions, mut equivalent_pairs) = (0usize, 0usize, 0usize);
    for seed in 0..200u64 {
        let n = 2 + (seed % 6) as usize;
        let cfg = GenConfig::new(n, 3, seed).unwrap();
        let t1 = randgen::labeled_tree(&cfg);
        let mut t2 = randgen::apply_random_cipher(&randgen::shuffled_copy(&t1, seed), seed);
        if seed.is_multiple_of(3) {
            if let Ok(p) = randgen::perturb_one_label(&t2, seed) {
                t2 = p;
            }
        }
        let t3 = randgen::apply_random_cipher(&randgen::shuffled_copy(&t2, seed + 1), seed + 1);
        let (e12, e21) = (equivalent(&t1, &t2)?, equivalent(&t2, &t1)?);
        ensure(e12 == e21, || format!("not symmetric on seed {seed}"))?;
        let (e23, e13) = (equivalent(&t2, &t3)?, equivalent(&t1, &t3)?);
        ensure(!(e12 && e23) || e13, || {
            format!("not transitive on seed {seed}")
        })?;
        equivalent_pairs += usize::from(e12);

        let w12 = cipherings(&t1, &t2);
        let w23 = cipherings(&t2, &t3);
        for a in &w12 {
            let inv = a.inverse(&t2, &t1);
            ensure(
                is_tree_isomorphism(&t2, &t1, &inv.phi)
                    && is_ciphering(&inv, CipherMode::Bijective),
                || format!("inverse fails on seed {seed}"),
            )?;
            inversions += 1;
            for b in &w23 {
                let c = a.then(b, &t1, &t3);
                ensure(
                    is_tree_isomorphism(&t1, &t3, &c.phi)
                        && is_ciphering(&c, CipherMode::Bijective),
                    || format!("composition fails on seed {seed}"),
                )?;
                compositions += 1;
            }
        }
    }
    Ok(format!(
        "reflexive on 200 trees; 200 triples ({equivalent_pairs} equivalent); {inversions} inversions, {compositions} compositions"
    ))
}

/// The benchmark runs shared by the grid-wide criteria.
struct Bench {
    rows: Vec<CellResult>,
}

fn bench_runs() -> Bench {
    let mut rows = Vec::new();
    for scenario in [Scenario::Similar, Scenario::Perturbed] {
        for n in [50usize, 100, 200, 400, 800] {
            for a in [2usize, 5, 10, 26] {
                for r in 0..20 {
                    let cfg = GenConfig::new(n, a, cell_seed(17, n, a, r)).unwrap();
                    if let Ok(cell) = run_cell(&cfg, scenario, true) {
                        rows.push(cell);
                    }
                }
            }
        }
    }
    Bench { rows }
}

fn call_bound(bench: &Bench, extra: &[CellResult]) -> Check {
    let all = bench.rows.iter().chain(extra);
    let mut count = 0;
    let mut worst = 0.0f64;
    for c in all {
        count += 1;
        let r = &c.record;
        ensure(r.map_nodes_calls <= r.n, || {
            format!("n = {} made {} calls", r.n, r.map_nodes_calls)
        })?;
        worst = worst.max(r.map_nodes_calls as f64 / r.n as f64);
    }
    Ok(format!("{count} rows, max calls / n = {worst:.3}"))
}

fn linearity() -> (Check, Vec<CellResult>) {
    let sizes = [250usize, 500, 1000, 2000, 4000];
    let reps = 50;
    let pairs: Vec<Vec<(LabeledTree, LabeledTree)>> = sizes
        .iter()
        .map(|&n| {
            (0..reps)
                .map(|r| {
                    let cfg = GenConfig::new(n, 5, cell_seed(7, n, 5, r)).unwrap();
                    randgen::scenario_pair(&cfg, Scenario::Similar).unwrap()
                })
                .collect()
        })
        .collect();
    // Sizes are interleaved so that drifting machine load hits all of them
    // alike; a replicate's time is the best of three runs on its pair.
    let mut totals = vec![0f64; sizes.len()];
    for r in 0..reps {
        for (i, per_size) in pairs.iter().enumerate() {
            let (t1, t2) = &per_size[r];
            let best = (0..3)
                .map(|_| engine::run_timed(t1, t2, &quiet()).1)
                .min()
                .unwrap();
            totals[i] += best as f64;
        }
    }
    let means: Vec<f64> = totals.iter().map(|t| t / reps as f64).collect();
    let cells = sizes
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| GenConfig::new(n, 5, cell_seed(7, n, 5, r)).unwrap()))
        .map(|cfg| run_cell(&cfg, Scenario::Similar, false).unwrap())
        .collect();
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, means.iter().sum::<f64>() / k);
    let sxy: f64 = xs
        .iter()
        .zip(&means)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&means)
        .map(|(x, y)| (y - (icpt + slope * x)).powi(2))
        .sum();
    let ss_tot: f64 = means.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    let ratio = means[4] / means[3];
    let detail = format!(
        "R^2 = {r2:.4}, t(4000)/t(2000) = {ratio:.2}, means (us) = [{}]",
        means
            .iter()
            .map(|m| format!("{:.0}", m / 1e3))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let check = if r2 >= 0.95 && ratio <= 2.5 {
        Ok(detail)
    } else {
        Err(detail)
    };
    (check, cells)
}

fn negative_log_ratio() -> (Check, Vec<CellResult>) {
    let run = |n: usize, reps: usize| -> Vec<CellResult> {
        (0..reps)
            .map(|r| {
                let cfg = GenConfig::new(n, 5, cell_seed(3, n, 5, r)).unwrap();
                run_cell(&cfg, Scenario::Similar, true).unwrap()
            })
            .collect()
    };
    let at100 = run(100, 500);
    let at400 = run(400, 500);
    let negative = at100.iter().filter(|c| c.record.r_final < 0.0).count();
    let mut r100: Vec<f64> = at100.iter().map(|c| c.record.r_final).collect();
    let mut r400: Vec<f64> = at400.iter().map(|c| c.record.r_final).collect();
    let (m100, m400) = (median(&mut r100), median(&mut r400));
    let detail = format!("{negative}/500 negative at n = 100; median r_final {m100:.3} (n = 100) vs {m400:.3} (n = 400)");
    let check = if negative * 100 >= 99 * 500 && m400 < m100 {
        Ok(detail)
    } else {
        Err(detail)
    };
    let mut cells = at100;
    cells.extend(at400);
    (check, cells)
}

fn magnitude() -> Check {
    let mut logs: Vec<f64> = (0..10_000u64)
        .map(|seed| {
            let t = randgen::random_recursive_tree(&GenConfig::new(100, 1, seed).unwrap());
            let c = ahu::color(&[&t]);
            ahu::n_equiv_log10(&t, c.colors(0))
        })
        .collect();
    let mean = logs.iter().map(|l| 10f64.powf(*l)).sum::<f64>() / logs.len() as f64;
    let med = median(&mut logs);
    let target = 2.21e5f64.log10();
    let detail = format!(
        "median N = {:.3e}, mean N = {mean:.3e} (mean not gated)",
        10f64.powf(med)
    );
    if (med - target).abs() <= 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[derive(Default)]
struct SplitTally {
    bag: usize,
    collection: usize,
    worst: f64,
}

impl SplitTally {
    fn check(&mut self, t1: &LabeledTree, t2: &LabeledTree) -> Result<(), String> {
        let opts = EngineOptions {
            record_splits: true,
            ..EngineOptions::default()
        };
        for s in engine::run(t1, t2, &opts).splits {
            let diff = (s.observed_log10_reduction() - s.predicted_log10_reduction()).abs();
            self.worst = self.worst.max(diff);
            match s.kind {
                SplitKind::Bag => self.bag += 1,
                SplitKind::Collection { .. } => self.collection += 1,
            }
            ensure(diff < 1e-9, || format!("{s:?} off by {diff:e}"))?;
        }
        Ok(())
    }
}

fn split_accounting() -> Check {
    let mut random = SplitTally::default();
    for seed in 0..100u64 {
        let n = 20 + (seed % 5) as usize * 40;
        let a = [2, 5, 10][(seed % 3) as usize];
        let (t1, t2) =
            randgen::scenario_pair(&GenConfig::new(n, a, seed).unwrap(), Scenario::Similar)
                .unwrap();
        random.check(&t1, &t2)?;
    }
    let mut built = SplitTally::default();
    for (a, b) in [
        ("R(R(A,B),Q(A,B))", "r(r(a,b),q(a,b))"),
        ("R(R(A,A,B,B),Q(A,A,B,B))", "r(r(a,a,b,b),q(a,a,b,b))"),
        (
            "R(R(A,B,C),Q(A,B,C),S(A,B,C))",
            "r(r(a,b,c),q(a,b,c),s(a,b,c))",
        ),
    ] {
        built.check(&tree(a), &tree(b))?;
    }
    ensure(random.bag > 0 && built.collection > 0, || {
        "no splits observed".into()
    })?;
    Ok(format!(
        "100 random runs: {} bag cuts, {} collection cuts; built pairs: {} collection cuts; max error {:.1e}",
        random.bag,
        random.collection,
        built.collection,
        random.worst.max(built.worst)
    ))
}

fn monotone_and_valid(bench: &Bench, extra: &[CellResult]) -> Check {
    let mut count = 0;
    for c in bench.rows.iter().chain(extra) {
        count += 1;
        ensure(c.validation_errors.is_empty(), || {
            format!("seed {}: {:?}", c.record.seed, c.validation_errors)
        })?;
        for w in c.stage_log10.windows(2) {
            ensure(w[1] <= w[0] + 1e-9, || {
                format!("seed {}: stages {:?}", c.record.seed, c.stage_log10)
            })?;
        }
    }
    Ok(format!("{count} validated runs"))
}

fn report(id: u32, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail, ok) = match result {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag} {id:>2} {name}: {detail} [{secs:.1} s]");
    ok
}

fn main() {
    println!("acceptance criteria");
    let mut ok = true;
    ok &= report(1, "golden trace", golden_trace);
    ok &= report(2, "N_equiv golden values", n_equiv_golden);
    ok &= report(3, "oracle count equivalence", oracle_count);
    ok &= report(4, "decision equivalence", decision_equivalence);
    ok &= report(
        5,
        "equivalence relation and witness lemmas",
        theorem_properties,
    );

    // Rows from the timing and log-ratio runs also count toward the
    // grid-wide criteria 6 and 11.
    let mut extra: Vec<CellResult> = Vec::new();
    let mut validated: Vec<CellResult> = Vec::new();
    ok &= report(7, "linear running time", || {
        let (check, cells) = linearity();
        extra.extend(cells);
        check
    });
    ok &= report(8, "negative log-ratio", || {
        let (check, cells) = negative_log_ratio();
        extra.extend(cells.iter().cloned());
        validated.extend(cells);
        check
    });
    let mut bench = None;
    ok &= report(6, "map_nodes call bound", || {
        let b = bench.insert(bench_runs());
        call_bound(b, &extra)
    });
    ok &= report(9, "N_equiv magnitude", magnitude);
    ok &= report(10, "split-factor accounting", split_accounting);
    ok &= report(11, "monotone stages and validator", || match &bench {
        Some(b) => monotone_and_valid(b, &validated),
        None => Err("benchmark runs unavailable".into()),
    });

    if !ok {
        std::process::exit(1);
    }
}
