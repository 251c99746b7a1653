use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use byzsim::harness::export::{write_rounds, write_summary};
use byzsim::harness::sweep::{expand, replicate_seed, run_points, Axis, SweepPoint};
use byzsim::harness::{verify, RunConfig, SUITES};
use byzsim::Error;

/// Simulator for Byzantine-robust distributed stochastic optimization.
#[derive(Parser)]
#[command(name = "byzsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config (all of its `seeds_count` replicates) and write per-round CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the cross product of axis values and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `path=v1,v2,...`; repeatable.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Per-round CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-run summary CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run a property suite, or `all`.
    Verify {
        #[arg(long)]
        suite: String,
    },
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    RunConfig::from_json(&std::fs::read_to_string(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

/// `Ok(true)` when everything passed.
fn execute(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let points = (0..cfg.seeds_count)
                .map(|s| SweepPoint {
                    run_id: s,
                    axes: Vec::new(),
                    replicate: s,
                    seed: replicate_seed(cfg.seed, s),
                    config: cfg.clone(),
                })
                .collect();
            let runs = run_points(points)?;
            let traces: Vec<_> = runs.iter().map(|r| (r.point.run_id, &r.trace)).collect();
            write_rounds(create(&out)?, &traces)?;
            for r in &runs {
                let s = r.trace.summary();
                println!(
                    "run {} seed {}: final gap {:.6e}, avg |grad|^2 {:.6e}, cost {}",
                    r.point.run_id, r.trace.seed, s.final_gap, s.avg_grad_norm_sq, s.total_cost
                );
            }
            Ok(true)
        }
        Command::Sweep {
            config,
            axes,
            seeds,
            out,
            summary,
        } => {
            let cfg = load(&config)?;
            let axes = axes.iter().map(|a| Axis::parse(a)).collect::<Result<Vec<_>, _>>()?;
            let runs = run_points(expand(&cfg, &axes, seeds)?)?;
            let traces: Vec<_> = runs.iter().map(|r| (r.point.run_id, &r.trace)).collect();
            write_rounds(create(&out)?, &traces)?;
            if let Some(path) = summary {
                write_summary(create(&path)?, &runs)?;
            }
            println!("{} runs written to {}", runs.len(), out.display());
            Ok(true)
        }
        Command::Verify { suite } => {
            let names: Vec<&str> = if suite == "all" {
                SUITES.to_vec()
            } else {
                vec![suite.as_str()]
            };
            let mut ok = true;
            for name in names {
                let rep = verify(name)?;
                println!("[{}]", rep.suite);
                for c in &rep.checks {
                    println!("  {c}");
                }
                ok &= rep.passed();
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
