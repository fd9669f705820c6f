use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use treecipher::engine::{OutcomeJson, StageJson};
use treecipher::experiment::{self, Grid};
use treecipher::oracle::complete_backtracking;
use treecipher::randgen::{self, GenConfig, Scenario};
use treecipher::{engine, CipherMode, EngineOptions, LabeledTree, Outcome, Verdict};

const EXIT_INPUT: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    version,
    about = "Substitution-cipher isomorphism of unordered labeled trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether two trees are equal up to a relabeling.
    /// Exit status: 0 isomorphic, 1 not isomorphic, 2 undecided, 3 bad input.
    Decide {
        tree1: PathBuf,
        tree2: PathBuf,
        #[arg(long, default_value = "bijective")]
        mode: CipherMode,
        /// Finish an undecided run by backtracking over the residual space
        #[arg(long)]
        complete: bool,
        #[arg(long)]
        json: bool,
    },
    /// Print the search-space size after each filter stage.
    Reduce {
        tree1: PathBuf,
        tree2: PathBuf,
        #[arg(long, default_value = "bijective")]
        mode: CipherMode,
        #[arg(long)]
        json: bool,
    },
    /// Write a (T1, T2) couple following the experiment protocol.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        alphabet: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "similar")]
        scenario: Scenario,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a benchmark grid and write one CSV row per replicate.
    /// Worker threads: TREECIPHER_WORKERS, else all cores.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,26")]
        alphabets: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        replicates: usize,
        #[arg(long, default_value = "similar")]
        scenario: Scenario,
        /// Base seed from which every cell seed is derived
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path, `-` for stdout
        #[arg(long, default_value = "-")]
        out: PathBuf,
        /// Also run the structural validator on every cell
        #[arg(long)]
        validate: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn read_tree(path: &Path) -> Result<LabeledTree> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    LabeledTree::parse_any(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn read_pair(a: &Path, b: &Path) -> Result<(LabeledTree, LabeledTree)> {
    Ok((read_tree(a)?, read_tree(b)?))
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Isomorphic => 0,
        Verdict::NotIsomorphic => 1,
        Verdict::Undecided => 2,
    }
}

fn print_outcome(json: &OutcomeJson) {
    println!("verdict: {}", json.verdict);
    if let Some(reason) = &json.reason {
        println!("reason: {reason}");
    }
    if let Some(f) = &json.f {
        let pairs: Vec<_> = f.iter().map(|[a, b]| format!("{a}->{b}")).collect();
        println!("f: {{{}}}", pairs.join(", "));
    }
    if let Some(phi) = &json.phi {
        let pairs: Vec<_> = phi.iter().map(|[u, v]| format!("{u}->{v}")).collect();
        println!("phi: {{{}}}", pairs.join(", "));
    }
    if let Some(res) = &json.residual {
        println!(
            "residual: {} bags, {} collections",
            res.bags.len(),
            res.collections.len()
        );
    }
    println!("log10 N final: {:.6}", json.log10_n_final);
    println!("log10 N equiv: {:.6}", json.log10_n_equiv);
    println!("r_final: {:.6}", json.r_final);
}

fn decide(t1: &Path, t2: &Path, mode: CipherMode, complete: bool, json: bool) -> Result<u8> {
    let (t1, t2) = read_pair(t1, t2)?;
    let report = engine::run(&t1, &t2, &EngineOptions::with_mode(mode));
    // The report keeps the residual's stage metrics; the outcome is final.
    let completed = match &report.outcome {
        Outcome::Undecided(state) if complete => Some(complete_backtracking((**state).clone())),
        _ => None,
    };
    let outcome = completed.as_ref().unwrap_or(&report.outcome);
    let out = OutcomeJson::new(outcome, &report);
    if json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        print_outcome(&out);
    }
    Ok(verdict_code(outcome.verdict()))
}

fn reduce(t1: &Path, t2: &Path, mode: CipherMode, json: bool) -> Result<u8> {
    let (t1, t2) = read_pair(t1, t2)?;
    let report = engine::run(&t1, &t2, &EngineOptions::with_mode(mode));
    let stages: Vec<StageJson> = report.stages.iter().map(StageJson::from).collect();
    if json {
        println!("{}", serde_json::to_string_pretty(&stages)?);
    } else {
        println!("{:<12} {:>14}  N", "stage", "log10 N");
        for s in &stages {
            println!(
                "{:<12} {:>14.6}  {}",
                s.name,
                s.log10_n,
                s.exact.as_deref().unwrap_or("-")
            );
        }
        println!("verdict: {}", report.outcome.verdict());
    }
    Ok(0)
}

fn gen(cfg: GenConfig, scenario: Scenario, out_dir: &Path, format: Format) -> Result<u8> {
    let (t1, t2) = randgen::scenario_pair(&cfg, scenario)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let (ext, render): (_, fn(&LabeledTree) -> String) = match format {
        Format::Text => ("txt", |t| t.serialize() + "\n"),
        Format::Json => ("json", |t| t.to_json().to_string() + "\n"),
    };
    for (name, t) in [("t1", &t1), ("t2", &t2)] {
        let path = out_dir.join(format!("{name}.{ext}"));
        fs::write(&path, render(t)).with_context(|| format!("cannot write {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(0)
}

fn bench(grid: Grid, out: &Path) -> Result<u8> {
    let rows = grid.run(experiment::worker_count())?;
    let invalid: Vec<_> = rows.iter().flat_map(|r| &r.validation_errors).collect();
    if !invalid.is_empty() {
        bail!(
            "validator failed on {} stages, first: {}",
            invalid.len(),
            invalid[0]
        );
    }
    let records = rows.into_iter().map(|r| r.record);
    if out == Path::new("-") {
        let stdout = io::stdout();
        experiment::write_csv(stdout.lock(), records)?;
    } else {
        let file =
            fs::File::create(out).with_context(|| format!("cannot write {}", out.display()))?;
        let mut w = io::BufWriter::new(file);
        experiment::write_csv(&mut w, records)?;
        w.flush()?;
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Decide {
            tree1,
            tree2,
            mode,
            complete,
            json,
        } => decide(&tree1, &tree2, mode, complete, json),
        Command::Reduce {
            tree1,
            tree2,
            mode,
            json,
        } => reduce(&tree1, &tree2, mode, json),
        Command::Gen {
            n,
            alphabet,
            seed,
            scenario,
            out_dir,
            format,
        } => gen(
            GenConfig::new(n, alphabet, seed)?,
            scenario,
            &out_dir,
            format,
        ),
        Command::Bench {
            sizes,
            alphabets,
            replicates,
            scenario,
            seed,
            out,
            validate,
        } => bench(
            Grid {
                sizes,
                alphabets,
                replicates,
                scenario,
                base_seed: seed,
                validate,
            },
            &out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
