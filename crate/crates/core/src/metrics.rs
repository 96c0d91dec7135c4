//! Per-run packet ledger and the three reported metrics: packet delivery
//! ratio, end-to-end latency and radio duty cycle, plus aggregation across
//! repetitions.

use serde::Serialize;

use crate::config::{EnvId, InFlightPolicy, PhyId, SchedulerId};
use crate::engine::TraceEvent;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "fate")]
pub enum FrameFate {
    InFlight,
    Delivered { latency_us: u64, hops: u32 },
    QueueDrop,
    RetryLoss,
    RoutingDrop,
}

/// One application frame, from generation to its final fate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameRecord {
    pub source: NodeId,
    pub destination: NodeId,
    pub generated_at_us: u64,
    pub fate: FrameFate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NodeReport {
    pub radio_on_us: u64,
    pub join_time_us: Option<u64>,
    /// `sim_end - join_time`, zero if the node never joined.
    pub joined_duration_us: u64,
    pub collisions: u64,
    pub rank: Option<u16>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub phy: PhyId,
    pub scheduler: SchedulerId,
    pub env: EnvId,
    pub node_count: usize,
    pub seed: u64,
    pub slot_duration_us: u64,
    pub sim_end_us: u64,
    pub in_flight_policy: InFlightPolicy,
    pub frames: Vec<FrameRecord>,
    pub nodes: Vec<NodeReport>,
    pub trace: Vec<TraceEvent>,
}

impl RunResult {
    fn count(&self, pred: impl Fn(&FrameFate) -> bool) -> usize {
        self.frames.iter().filter(|f| pred(&f.fate)).count()
    }

    pub fn generated(&self) -> usize {
        self.frames.len()
    }

    pub fn delivered(&self) -> usize {
        self.count(|f| matches!(f, FrameFate::Delivered { .. }))
    }

    pub fn queue_drops(&self) -> usize {
        self.count(|f| *f == FrameFate::QueueDrop)
    }

    pub fn retry_losses(&self) -> usize {
        self.count(|f| *f == FrameFate::RetryLoss)
    }

    pub fn routing_drops(&self) -> usize {
        self.count(|f| *f == FrameFate::RoutingDrop)
    }

    pub fn in_flight_at_end(&self) -> usize {
        self.count(|f| *f == FrameFate::InFlight)
    }

    /// Latencies of delivered frames, in generation order.
    pub fn latency_samples_us(&self) -> Vec<u64> {
        self.frames
            .iter()
            .filter_map(|f| match f.fate {
                FrameFate::Delivered { latency_us, .. } => Some(latency_us),
                _ => None,
            })
            .collect()
    }

    pub fn joined_nodes(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.join_time_us.is_some())
            .count()
    }

    pub fn collisions(&self) -> u64 {
        self.nodes.iter().map(|n| n.collisions).sum()
    }

    /// `generated == delivered + drops + losses + in flight`, and no node
    /// has been on longer than it was joined.
    pub fn check_conservation(&self) -> Result<(), String> {
        let settled = self.delivered()
            + self.queue_drops()
            + self.retry_losses()
            + self.routing_drops()
            + self.in_flight_at_end();
        if settled != self.generated() {
            return Err(format!(
                "{} frames generated but {settled} accounted for",
                self.generated()
            ));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.radio_on_us > n.joined_duration_us {
                return Err(format!(
                    "node {i} radio on {} us over {} us joined",
                    n.radio_on_us, n.joined_duration_us
                ));
            }
        }
        Ok(())
    }
}

/// Delivered over generated, `None` when nothing was generated.
///
/// Under [`InFlightPolicy::ExcludeTail`] frames generated within twice the
/// run's mean latency of the end are left out of both counts.
pub fn compute_pdr(run: &RunResult) -> Option<f64> {
    let cutoff = match run.in_flight_policy {
        InFlightPolicy::Count => u64::MAX,
        InFlightPolicy::ExcludeTail => match compute_latency_stats(run) {
            Some(stats) => run
                .sim_end_us
                .saturating_sub((2.0 * stats.mean_s * 1e6) as u64),
            None => u64::MAX,
        },
    };
    let (mut generated, mut delivered) = (0usize, 0usize);
    for f in run.frames.iter().filter(|f| f.generated_at_us < cutoff) {
        generated += 1;
        if matches!(f.fate, FrameFate::Delivered { .. }) {
            delivered += 1;
        }
    }
    (generated > 0).then(|| delivered as f64 / generated as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean_s: f64,
    /// Sample standard deviation; 0 for a single delivery.
    pub std_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub samples: usize,
}

/// Statistics over delivered frames only; `None` without deliveries.
pub fn compute_latency_stats(run: &RunResult) -> Option<LatencyStats> {
    let mut s: Vec<f64> = run
        .latency_samples_us()
        .into_iter()
        .map(|us| us as f64 / 1e6)
        .collect();
    if s.is_empty() {
        return None;
    }
    s.sort_by(f64::total_cmp);
    let (mean, std) = mean_std(&s);
    Some(LatencyStats {
        mean_s: mean,
        std_s: std.unwrap_or(0.0),
        p50_s: percentile(&s, 0.50),
        p95_s: percentile(&s, 0.95),
        samples: s.len(),
    })
}

/// Linear interpolation between closest ranks; `sorted` must be non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean over joined nodes of radio-on time over joined time. Scanning
/// before the join is never counted.
pub fn compute_rdc(run: &RunResult) -> Option<f64> {
    let ratios: Vec<f64> = run
        .nodes
        .iter()
        .filter(|n| n.join_time_us.is_some() && n.joined_duration_us > 0)
        .map(|n| n.radio_on_us as f64 / n.joined_duration_us as f64)
        .collect();
    (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Mean and sample standard deviation (`None` below two values).
fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// The scalar metrics of one run. Missing values are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunMetrics {
    pub pdr: Option<f64>,
    pub latency_mean_s: Option<f64>,
    pub latency_p50_s: Option<f64>,
    pub latency_p95_s: Option<f64>,
    pub rdc: Option<f64>,
}

/// Metric names in output order.
pub const METRIC_NAMES: [&str; 5] = [
    "pdr",
    "latency_mean_s",
    "latency_p50_s",
    "latency_p95_s",
    "rdc",
];

impl RunMetrics {
    pub fn of(run: &RunResult) -> RunMetrics {
        let lat = compute_latency_stats(run);
        RunMetrics {
            pdr: compute_pdr(run),
            latency_mean_s: lat.map(|l| l.mean_s),
            latency_p50_s: lat.map(|l| l.p50_s),
            latency_p95_s: lat.map(|l| l.p95_s),
            rdc: compute_rdc(run),
        }
    }

    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 5] {
        [
            self.pdr,
            self.latency_mean_s,
            self.latency_p50_s,
            self.latency_p95_s,
            self.rdc,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub reps_used: usize,
}

impl MetricSummary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> MetricSummary {
        let present: Vec<f64> = values.into_iter().flatten().collect();
        if present.is_empty() {
            return MetricSummary {
                mean: None,
                std: None,
                reps_used: 0,
            };
        }
        let (mean, std) = mean_std(&present);
        MetricSummary {
            mean: Some(mean),
            std: Some(std.unwrap_or(0.0)),
            reps_used: present.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellKey {
    pub phy: PhyId,
    pub scheduler: SchedulerId,
    pub env: EnvId,
    pub nodes: usize,
}

/// Cross-repetition statistics of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateResult {
    #[serde(flatten)]
    pub key: CellKey,
    pub pdr: MetricSummary,
    pub latency_mean_s: MetricSummary,
    pub latency_p50_s: MetricSummary,
    pub latency_p95_s: MetricSummary,
    pub rdc: MetricSummary,
    pub runs: usize,
    /// Runs that aborted on an invariant violation; excluded above.
    pub failed_runs: usize,
}

impl AggregateResult {
    pub fn from_metrics(key: CellKey, runs: &[RunMetrics], failed_runs: usize) -> AggregateResult {
        let col = |f: fn(&RunMetrics) -> Option<f64>| MetricSummary::of(runs.iter().map(f));
        AggregateResult {
            key,
            pdr: col(|m| m.pdr),
            latency_mean_s: col(|m| m.latency_mean_s),
            latency_p50_s: col(|m| m.latency_p50_s),
            latency_p95_s: col(|m| m.latency_p95_s),
            rdc: col(|m| m.rdc),
            runs: runs.len() + failed_runs,
            failed_runs,
        }
    }

    /// Summaries in [`METRIC_NAMES`] order.
    pub fn summaries(&self) -> [MetricSummary; 5] {
        [
            self.pdr,
            self.latency_mean_s,
            self.latency_p50_s,
            self.latency_p95_s,
            self.rdc,
        ]
    }
}

/// Aggregates runs of one cell; the key is taken from the first run.
///
/// # Panics
/// On an empty slice.
pub fn aggregate(runs: &[RunResult]) -> AggregateResult {
    let first = runs.first().expect("aggregate needs at least one run");
    let key = CellKey {
        phy: first.phy,
        scheduler: first.scheduler,
        env: first.env,
        nodes: first.node_count,
    };
    let metrics: Vec<RunMetrics> = runs.iter().map(RunMetrics::of).collect();
    AggregateResult::from_metrics(key, &metrics, 0)
}
