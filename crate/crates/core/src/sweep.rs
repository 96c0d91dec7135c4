//! Seeded repetitions over a grid of scenarios, run in parallel, reduced in a
//! fixed order and written as long-format CSV plus a JSON mirror.
//!
//! Repetition `k` of cell `c` runs with seed `mix_seed(base_seed, c, k)`.
//! Topologies are drawn from a seed that depends only on the environment, the
//! node count and `k`, so every PHY and scheduler of a repetition sees the
//! same node layout.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::scenario::{parse_toml, RawScenario};
use crate::config::{EnvId, PhyId, ScenarioConfig, SchedulerId};
use crate::engine::{run_scenario, RunOptions, TraceEvent};
use crate::error::{ConfigError, Error, SimError};
use crate::metrics::{AggregateResult, CellKey, RunMetrics, RunResult, METRIC_NAMES};
use crate::seeding::mix_seed;
use crate::topology::{generate_topology, Topology};

/// Keeps topology seeds apart from run seeds drawn from the same base.
const TOPOLOGY_DOMAIN: u64 = 0x746f_706f_6c6f_6779;

pub const AGGREGATE_HEADER: &str = "phy,scheduler,env,nodes,metric,mean,std,reps_used";
pub const PER_RUN_HEADER: &str = "phy,scheduler,env,nodes,rep,seed,status,generated,delivered,queue_drops,retry_losses,routing_drops,in_flight,collisions,joined,pdr,latency_mean_s,latency_p50_s,latency_p95_s,rdc";

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub phys: Vec<PhyId>,
    pub schedulers: Vec<SchedulerId>,
    pub envs: Vec<EnvId>,
    pub node_counts: Vec<usize>,
    pub repetitions: u32,
    pub base_seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Every other scenario parameter; its phy, scheduler, env and node
    /// count are replaced per cell.
    pub base: ScenarioConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    phys: Vec<String>,
    schedulers: Vec<String>,
    envs: Vec<String>,
    node_counts: Vec<usize>,
    repetitions: Option<u32>,
    base_seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    scenario: RawScenario,
}

impl SweepSpec {
    /// Parses a sweep file. Call [`SweepSpec::validate`] before running.
    pub fn parse(text: &str) -> Result<SweepSpec, ConfigError> {
        let raw: RawSweep = parse_toml(text)?;
        if raw.scenario.phy.is_some()
            || raw.scenario.scheduler.is_some()
            || raw.scenario.env.is_some()
            || raw.scenario.nodes.is_some()
        {
            return Err(ConfigError::invalid(
                "scenario",
                "phy, scheduler, env and nodes come from the sweep lists".to_string(),
            ));
        }
        let mut base = ScenarioConfig::new(PhyId::Bt2M, SchedulerId::Orchestra, EnvId::Home, 2);
        raw.scenario.apply_to(&mut base)?;
        Ok(SweepSpec {
            phys: raw
                .phys
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()?,
            schedulers: raw
                .schedulers
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()?,
            envs: raw
                .envs
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()?,
            node_counts: raw.node_counts,
            repetitions: raw.repetitions.unwrap_or(base.repetitions),
            base_seed: raw.base_seed.unwrap_or(base.seed),
            out_dir: raw.out,
            base,
        })
    }

    /// A one-cell sweep running `cfg.repetitions` repetitions from `cfg.seed`.
    pub fn single(cfg: &ScenarioConfig) -> SweepSpec {
        SweepSpec {
            phys: vec![cfg.phy_id],
            schedulers: vec![cfg.scheduler_id],
            envs: vec![cfg.env_id],
            node_counts: vec![cfg.node_count],
            repetitions: cfg.repetitions,
            base_seed: cfg.seed,
            out_dir: None,
            base: cfg.clone(),
        }
    }

    /// Cells in output order: PHY, then scheduler, environment, node count.
    pub fn cells(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &phy in &self.phys {
            for &sched in &self.schedulers {
                for &env in &self.envs {
                    for &n in &self.node_counts {
                        let mut cfg = self.base.clone();
                        cfg.phy_id = phy;
                        cfg.scheduler_id = sched;
                        cfg.env_id = env;
                        cfg.node_count = n;
                        cfg.repetitions = self.repetitions;
                        cfg.seed = self.base_seed;
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }

    /// Checks the grid. Node counts outside the usual range for an
    /// environment (10-50 home, 50-250 otherwise) are rejected unless `force`.
    pub fn validate(&self, force: bool) -> Result<(), ConfigError> {
        for (field, empty) in [
            ("phys", self.phys.is_empty()),
            ("schedulers", self.schedulers.is_empty()),
            ("envs", self.envs.is_empty()),
            ("node_counts", self.node_counts.is_empty()),
        ] {
            if empty {
                return Err(ConfigError::invalid(field, "must not be empty"));
            }
        }
        if self.repetitions == 0 {
            return Err(ConfigError::invalid("repetitions", "must be at least 1"));
        }
        if !force {
            for &env in &self.envs {
                let range = env.node_count_range();
                if let Some(n) = self.node_counts.iter().find(|n| !range.contains(n)) {
                    return Err(ConfigError::invalid(
                        "node_counts",
                        format!(
                            "{n} nodes is outside {}..={} for {env} (use --force to allow)",
                            range.start(),
                            range.end()
                        ),
                    ));
                }
            }
        }
        for cfg in self.cells() {
            cfg.validate()?;
        }
        Ok(())
    }
}

/// Seed of repetition `rep` of cell `cell`.
pub fn run_seed(base_seed: u64, cell: usize, rep: u32) -> u64 {
    mix_seed(base_seed, cell as u64, u64::from(rep))
}

/// Seed of the node layout used by repetition `rep` of any cell with this
/// environment and size.
pub fn topology_seed(base_seed: u64, env: EnvId, nodes: usize, rep: u32) -> u64 {
    mix_seed(
        base_seed ^ TOPOLOGY_DOMAIN,
        ((env.index() as u64) << 16) | nodes as u64,
        u64::from(rep),
    )
}

#[derive(Default)]
pub struct SweepOptions<'a> {
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
    pub trace: bool,
    /// Called with (finished runs, total runs) after each run.
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub key: CellKey,
    pub rep: u32,
    pub seed: u64,
    /// `None` on success.
    pub error: Option<String>,
    pub generated: usize,
    pub delivered: usize,
    pub queue_drops: usize,
    pub retry_losses: usize,
    pub routing_drops: usize,
    pub in_flight: usize,
    pub collisions: u64,
    pub joined: usize,
    pub metrics: Option<RunMetrics>,
}

impl RunSummary {
    fn of(key: CellKey, rep: u32, seed: u64, result: &Result<RunResult, SimError>) -> RunSummary {
        match result {
            Ok(r) => RunSummary {
                key,
                rep,
                seed,
                error: None,
                generated: r.generated(),
                delivered: r.delivered(),
                queue_drops: r.queue_drops(),
                retry_losses: r.retry_losses(),
                routing_drops: r.routing_drops(),
                in_flight: r.in_flight_at_end(),
                collisions: r.collisions(),
                joined: r.joined_nodes(),
                metrics: Some(RunMetrics::of(r)),
            },
            Err(e) => RunSummary {
                key,
                rep,
                seed,
                error: Some(e.to_string()),
                generated: 0,
                delivered: 0,
                queue_drops: 0,
                retry_losses: 0,
                routing_drops: 0,
                in_flight: 0,
                collisions: 0,
                joined: 0,
                metrics: None,
            },
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub aggregates: Vec<AggregateResult>,
    /// Ordered by (cell, repetition).
    pub runs: Vec<RunSummary>,
    /// (cell, repetition, events); empty unless tracing.
    pub traces: Vec<(usize, u32, Vec<TraceEvent>)>,
}

impl SweepOutcome {
    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

fn key_of(cfg: &ScenarioConfig) -> CellKey {
    CellKey {
        phy: cfg.phy_id,
        scheduler: cfg.scheduler_id,
        env: cfg.env_id,
        nodes: cfg.node_count,
    }
}

fn load_topology_file(path: &Path, nodes: usize) -> Result<Topology, Error> {
    let file = fs::File::open(path)?;
    let topo = Topology::read_csv(io::BufReader::new(file))?;
    if topo.len() != nodes {
        return Err(ConfigError::Invalid {
            field: "topology_file",
            reason: format!(
                "{} has {} nodes, scenario asks for {nodes}",
                path.display(),
                topo.len()
            ),
        }
        .into());
    }
    Ok(topo)
}

/// Runs one repetition: builds (or loads) the topology, then the world.
pub fn run_repetition(
    cfg: &ScenarioConfig,
    cell: usize,
    rep: u32,
    fixed: Option<&Topology>,
    opts: RunOptions,
) -> Result<RunResult, SimError> {
    let generated;
    let topo = match fixed {
        Some(t) => t,
        None => {
            generated = generate_topology(
                cfg.node_count,
                cfg.env_id,
                topology_seed(cfg.seed, cfg.env_id, cfg.node_count, rep),
            )?;
            &generated
        }
    };
    run_scenario(cfg, topo, run_seed(cfg.seed, cell, rep), opts)
}

/// Runs every repetition of every cell. The result does not depend on the
/// number of workers.
pub fn run_sweep(spec: &SweepSpec, opts: &SweepOptions<'_>) -> Result<SweepOutcome, Error> {
    let cells = spec.cells();
    let mut fixed: Vec<Option<Topology>> = Vec::with_capacity(cells.len());
    for cfg in &cells {
        fixed.push(match &cfg.topology_file {
            Some(path) => Some(load_topology_file(path, cfg.node_count)?),
            None => None,
        });
    }
    let jobs: Vec<(usize, u32)> = (0..cells.len())
        .flat_map(|c| (0..spec.repetitions).map(move |k| (c, k)))
        .collect();
    let total = jobs.len();
    let done = AtomicUsize::new(0);
    let run_opts = RunOptions { trace: opts.trace };
    let work = || -> Vec<(usize, u32, Result<RunResult, SimError>)> {
        jobs.par_iter()
            .map(|&(c, k)| {
                let r = run_repetition(&cells[c], c, k, fixed[c].as_ref(), run_opts);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(p) = opts.progress {
                    p(n, total);
                }
                (c, k, r)
            })
            .collect()
    };
    let results = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Io(io::Error::other(e)))?
            .install(work),
        None => work(),
    };

    let mut outcome = SweepOutcome::default();
    for (c, cfg) in cells.iter().enumerate() {
        let key = key_of(cfg);
        let mine = results.iter().filter(|(rc, _, _)| *rc == c);
        let mut metrics = Vec::new();
        let mut failed = 0;
        for (_, k, r) in mine {
            let summary = RunSummary::of(key, *k, run_seed(cfg.seed, c, *k), r);
            match &summary.metrics {
                Some(m) => metrics.push(*m),
                None => failed += 1,
            }
            outcome.runs.push(summary);
            if let Ok(run) = r {
                if opts.trace {
                    outcome.traces.push((c, *k, run.trace.clone()));
                }
            }
        }
        outcome
            .aggregates
            .push(AggregateResult::from_metrics(key, &metrics, failed));
    }
    Ok(outcome)
}

/// One line of the long-format output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub phy: PhyId,
    pub scheduler: SchedulerId,
    pub env: EnvId,
    pub nodes: usize,
    pub metric: &'static str,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub reps_used: usize,
}

/// Long-format rows: one per metric per cell, then a `failed_runs` row
/// whose mean is the count of aborted runs.
pub fn aggregate_rows(aggregates: &[AggregateResult]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for a in aggregates {
        let row = |metric, mean, std, reps_used| AggregateRow {
            phy: a.key.phy,
            scheduler: a.key.scheduler,
            env: a.key.env,
            nodes: a.key.nodes,
            metric,
            mean,
            std,
            reps_used,
        };
        for (name, s) in METRIC_NAMES.iter().zip(a.summaries()) {
            rows.push(row(name, s.mean, s.std, s.reps_used));
        }
        rows.push(row("failed_runs", Some(a.failed_runs as f64), None, a.runs));
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.phy,
            r.scheduler,
            r.env,
            r.nodes,
            r.metric,
            opt(r.mean),
            opt(r.std),
            r.reps_used
        );
    }
    s
}

pub fn aggregate_json(rows: &[AggregateRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
    s.push('\n');
    s
}

pub fn per_run_csv(runs: &[RunSummary]) -> String {
    let mut s = String::from(PER_RUN_HEADER);
    s.push('\n');
    for r in runs {
        let m = r.metrics.map(|m| m.values()).unwrap_or([None; 5]);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.key.phy,
            r.key.scheduler,
            r.key.env,
            r.key.nodes,
            r.rep,
            r.seed,
            if r.error.is_some() { "failed" } else { "ok" },
            r.generated,
            r.delivered,
            r.queue_drops,
            r.retry_losses,
            r.routing_drops,
            r.in_flight,
            r.collisions,
            r.joined,
            opt(m[0]),
            opt(m[1]),
            opt(m[2]),
            opt(m[3]),
            opt(m[4]),
        );
    }
    s
}

pub fn trace_csv(traces: &[(usize, u32, Vec<TraceEvent>)]) -> String {
    let mut s = String::from("cell,rep,asn,type,src,dst,frame_id\n");
    for (c, k, events) in traces {
        for e in events {
            let _ = writeln!(s, "{c},{k},{e}");
        }
    }
    s
}

/// Writes `aggregate.csv` and `aggregate.json`, plus `per_run.csv` and
/// `trace.csv` when asked for. Returns the paths written.
pub fn write_outputs(
    outcome: &SweepOutcome,
    dir: &Path,
    per_run: bool,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let rows = aggregate_rows(&outcome.aggregates);
    let mut files = vec![
        ("aggregate.csv", aggregate_csv(&rows)),
        ("aggregate.json", aggregate_json(&rows)),
    ];
    if per_run {
        files.push(("per_run.csv", per_run_csv(&outcome.runs)));
    }
    if !outcome.traces.is_empty() {
        files.push(("trace.csv", trace_csv(&outcome.traces)));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        let mut f = fs::File::create(&path)?;
        f.write_all(body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
