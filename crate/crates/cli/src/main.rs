//! `mphy`: run scenarios, sweeps and topology generation from the shell.
//!
//! Exit codes: 0 success, 1 invalid input, 2 runtime failure.

use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use mphy_core::sweep::{
    aggregate_json, aggregate_rows, run_sweep, write_outputs, SweepOptions, SweepOutcome, SweepSpec,
};
use mphy_core::{generate_topology, load_scenario, EnvId, Error, TopologyError};

#[derive(Parser)]
#[command(name = "mphy", version, about = "Multi-PHY TSCH network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every repetition of one scenario file.
    Simulate {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a grid of PHYs, schedulers, environments and node counts.
    Sweep {
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a connected random topology and write it as CSV.
    Topology {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Worker threads (default: available parallelism).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory; without it the aggregate JSON goes to stdout.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also write one row per repetition.
    #[arg(long)]
    per_run: bool,
    /// Also write delivery, drop and collision events.
    #[arg(long)]
    trace: bool,
    /// Allow node counts outside the usual range for the environment.
    #[arg(long)]
    force: bool,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { scenario, run } => simulate(&scenario, &run),
        Command::Sweep { spec, run } => sweep(&spec, &run),
        Command::Topology {
            nodes,
            env,
            seed,
            out,
        } => topology(nodes, &env, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn simulate(path: &Path, args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_scenario(&read_input(path)?).map_err(Error::from)?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let spec = SweepSpec::single(&cfg);
    execute(&spec, args, args.out.clone())
}

fn sweep(path: &Path, args: &RunArgs) -> Result<(), Failure> {
    let spec = SweepSpec::parse(&read_input(path)?).map_err(Error::from)?;
    for w in spec
        .cells()
        .first()
        .map(|c| c.warnings())
        .unwrap_or_default()
    {
        eprintln!("warning: {w}");
    }
    let out = args.out.clone().or_else(|| spec.out_dir.clone());
    execute(&spec, args, out)
}

fn execute(spec: &SweepSpec, args: &RunArgs, out: Option<PathBuf>) -> Result<(), Failure> {
    spec.validate(args.force).map_err(Error::from)?;
    let interactive = io::stderr().is_terminal();
    let last_pct = Mutex::new(u64::MAX);
    let progress = |done: usize, total: usize| {
        let pct = (done * 100 / total.max(1)) as u64;
        let mut last = last_pct.lock().unwrap();
        if pct != *last {
            *last = pct;
            if interactive {
                eprint!("\r{done}/{total} runs ({pct}%)");
            } else if pct.is_multiple_of(10) {
                eprintln!("{done}/{total} runs ({pct}%)");
            }
        }
    };
    let opts = SweepOptions {
        jobs: args.jobs,
        trace: args.trace,
        progress: Some(&progress),
    };
    let outcome = run_sweep(spec, &opts)?;
    if interactive {
        eprintln!();
    }
    emit(&outcome, out.as_deref(), args.per_run)?;
    report_failures(&outcome)
}

fn emit(outcome: &SweepOutcome, out: Option<&Path>, per_run: bool) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            let written = write_outputs(outcome, dir, per_run)
                .map_err(|e| Failure::Runtime(format!("writing {}: {e}", dir.display())))?;
            for p in written {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            let body = if per_run {
                serde_json::to_string_pretty(&serde_json::json!({
                    "aggregate": aggregate_rows(&outcome.aggregates),
                    "runs": outcome.runs,
                }))
                .expect("results serialize")
                    + "\n"
            } else {
                aggregate_json(&aggregate_rows(&outcome.aggregates))
            };
            io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| Failure::Runtime(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

fn report_failures(outcome: &SweepOutcome) -> Result<(), Failure> {
    let failed: Vec<_> = outcome.runs.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        eprintln!(
            "run failed: {} {} {} n={} rep {}: {}",
            r.key.phy,
            r.key.scheduler,
            r.key.env,
            r.key.nodes,
            r.rep,
            r.error.as_deref().unwrap_or_default()
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} of {} runs failed",
            failed.len(),
            outcome.runs.len()
        )))
    }
}

fn topology(nodes: usize, env: &str, seed: u64, out: &Path) -> Result<(), Failure> {
    let env: EnvId = env
        .parse()
        .map_err(|e: mphy_core::ConfigError| Failure::Invalid(e.to_string()))?;
    let topo = generate_topology(nodes, env, seed).map_err(|e| match e {
        TopologyError::TooFewNodes(_) => Failure::Invalid(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    })?;
    let file =
        fs::File::create(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    let mut w = io::BufWriter::new(file);
    topo.write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    eprintln!(
        "{} nodes, side {:.1} m, mean degree {:.2}",
        topo.len(),
        topo.area_side_m(),
        topo.mean_degree(mphy_core::phy_profile(mphy_core::PhyId::Bt2M).range_m(env))
    );
    Ok(())
}
