//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;

use mphy_core::config::InFlightPolicy;
use mphy_core::engine::TraceKind;
use mphy_core::metrics::{FrameFate, MetricSummary};
use mphy_core::schedule::hop_channel;
use mphy_core::sweep::{
    aggregate_csv, aggregate_json, aggregate_rows, per_run_csv, run_sweep, write_outputs,
    SweepOptions, SweepOutcome,
};
use mphy_core::*;
use rand::{Rng, SeedableRng};

const BASE_SEED: u64 = 20_240_601;
const REPS: u32 = 20;

struct Report {
    results: Vec<(u8, bool)>,
}

impl Report {
    fn record(&mut self, n: u8, pass: bool, detail: String) {
        println!(
            "criterion {n}: {} | {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        self.results.push((n, pass));
    }
}

fn sweep(
    phys: &[PhyId],
    scheds: &[SchedulerId],
    env: EnvId,
    nodes: &[usize],
    reps: u32,
    jobs: Option<usize>,
) -> SweepOutcome {
    let mut base = ScenarioConfig::new(phys[0], scheds[0], env, nodes[0]);
    base.seed = BASE_SEED;
    let mut spec = SweepSpec::single(&base);
    spec.phys = phys.to_vec();
    spec.schedulers = scheds.to_vec();
    spec.node_counts = nodes.to_vec();
    spec.repetitions = reps;
    spec.validate(false).expect("valid sweep");
    run_sweep(
        &spec,
        &SweepOptions {
            jobs,
            ..Default::default()
        },
    )
    .expect("sweep runs")
}

type Table = BTreeMap<(PhyId, SchedulerId, usize), BTreeMap<&'static str, MetricSummary>>;

fn table(outcome: &SweepOutcome) -> Table {
    let mut t = Table::new();
    for a in &outcome.aggregates {
        let m = t
            .entry((a.key.phy, a.key.scheduler, a.key.nodes))
            .or_default();
        for (name, s) in metrics::METRIC_NAMES.iter().zip(a.summaries()) {
            m.insert(name, s);
        }
    }
    t
}

fn mean(t: &Table, phy: PhyId, sched: SchedulerId, nodes: usize, metric: &str) -> f64 {
    t[&(phy, sched, nodes)][metric].mean.unwrap_or(f64::NAN)
}

/// Conservation of every run, recomputed from the per-run counters.
fn conservation(outcomes: &[&SweepOutcome]) -> (usize, usize) {
    let mut runs = 0;
    let mut bad = 0;
    for o in outcomes {
        for r in &o.runs {
            runs += 1;
            let settled =
                r.delivered + r.queue_drops + r.retry_losses + r.routing_drops + r.in_flight;
            if r.error.is_some() || settled != r.generated || r.generated == 0 {
                bad += 1;
            }
        }
    }
    (runs, bad)
}

fn criterion_1(rep: &mut Report) {
    let slot_match = [PhyId::Bt2M, PhyId::Bt1M, PhyId::Bt500K, PhyId::Ieee802154].map(|phy| {
        let p = phy_profile(phy);
        (
            phy,
            frame_airtime_us(&p, p.app_packet_bytes),
            p.slot_duration_us,
        )
    });
    let coded = phy_profile(PhyId::Bt125K);
    let coded_air = frame_airtime_us(&coded, coded.app_packet_bytes);
    let pass = slot_match.iter().all(|&(_, a, s)| a == s)
        && slot_match
            .iter()
            .map(|&(_, a, _)| a)
            .eq([1064, 2120, 4542, 4256])
        && coded_air == 17024
        && coded.slot_duration_us == 17040;
    let detail = slot_match
        .iter()
        .map(|(phy, a, s)| format!("{phy} {a}/{s}"))
        .chain([format!("bt5_125k {coded_air}/{}", coded.slot_duration_us)])
        .collect::<Vec<_>>()
        .join(", ");
    rep.record(1, pass, format!("airtime/slot us: {detail}"));
}

fn criterion_2(rep: &mut Report) {
    let range = phy_profile(PhyId::Bt2M).range_m(EnvId::Home);
    let (mut in_window, mut connected, mut min_deg, mut max_deg) = (0, 0, f64::MAX, f64::MIN);
    for seed in 0..100 {
        let topo = generate_topology(50, EnvId::Home, seed).expect("topology");
        // independent adjacency and BFS straight from the coordinates
        let pos = topo.positions();
        let adj: Vec<Vec<usize>> = (0..pos.len())
            .map(|i| {
                (0..pos.len())
                    .filter(|&j| {
                        j != i
                            && ((pos[i].0 - pos[j].0).powi(2) + (pos[i].1 - pos[j].1).powi(2))
                                .sqrt()
                                <= range
                    })
                    .collect()
            })
            .collect();
        let deg = adj.iter().map(Vec::len).sum::<usize>() as f64 / pos.len() as f64;
        min_deg = min_deg.min(deg);
        max_deg = max_deg.max(deg);
        if (5.8..=7.2).contains(&deg) {
            in_window += 1;
        }
        let mut seen = vec![false; pos.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().all(|&s| s) {
            connected += 1;
        }
    }
    rep.record(
        2,
        in_window == 100 && connected == 100,
        format!("degree in [5.8,7.2]: {in_window}/100 (min {min_deg:.2}, max {max_deg:.2}); connected {connected}/100"),
    );
}

fn criterion_3(rep: &mut Report, o: &SweepOutcome) {
    let t = table(o);
    let p = |phy| mean(&t, phy, SchedulerId::Orchestra, 50, "pdr");
    let (p2, p500, p125, p154) = (
        p(PhyId::Bt2M),
        p(PhyId::Bt500K),
        p(PhyId::Bt125K),
        p(PhyId::Ieee802154),
    );
    let pass = p500 > p2 && p500 > p125 && p500 >= p154 - 0.03;
    rep.record(
        3,
        pass,
        format!(
            "home/orchestra n=50 PDR: 500k {p500:.4}, 2m {p2:.4}, 125k {p125:.4}, 15.4 {p154:.4}"
        ),
    );
}

fn criterion_4(rep: &mut Report, o: &SweepOutcome) {
    let t = table(o);
    let p = |phy, n| mean(&t, phy, SchedulerId::Minimal, n, "pdr");
    let drop125 = p(PhyId::Bt125K, 50) - p(PhyId::Bt125K, 150);
    let drop500 = p(PhyId::Bt500K, 50) - p(PhyId::Bt500K, 150);
    let pass = drop125 >= 0.15 && drop500 < drop125 / 2.0;
    rep.record(
        4,
        pass,
        format!(
            "industrial/minimal PDR 125k n=50 {:.4} -> n=150 {:.4} (drop {:.1} pp, need >= 15); 500k {:.4} -> {:.4} (drop {:.1} pp)",
            p(PhyId::Bt125K, 50),
            p(PhyId::Bt125K, 150),
            drop125 * 100.0,
            p(PhyId::Bt500K, 50),
            p(PhyId::Bt500K, 150),
            drop500 * 100.0
        ),
    );
}

fn criterion_5(rep: &mut Report, o: &SweepOutcome) {
    let t = table(o);
    let r = |phy, s| mean(&t, phy, s, 100, "rdc");
    let o_ = |phy| r(phy, SchedulerId::Orchestra);
    let (r125, r154, r500, r1, r2) = (
        o_(PhyId::Bt125K),
        o_(PhyId::Ieee802154),
        o_(PhyId::Bt500K),
        o_(PhyId::Bt1M),
        o_(PhyId::Bt2M),
    );
    let ordering = r125 > r154 && r154 >= r500 && r500 > r1 && r1 >= r2;
    let ratios: Vec<(PhyId, f64)> = PhyId::ALL
        .iter()
        .map(|&phy| {
            (
                phy,
                r(phy, SchedulerId::Minimal) / r(phy, SchedulerId::Orchestra),
            )
        })
        .collect();
    let ratios_ok = ratios.iter().all(|&(_, x)| (1.3..=3.0).contains(&x));
    rep.record(
        5,
        ordering && ratios_ok,
        format!(
            "industrial n=100 orchestra RDC: 125k {r125:.5}, 15.4 {r154:.5}, 500k {r500:.5}, 1m {r1:.5}, 2m {r2:.5} (ordering {}); minimal/orchestra: {} (band {})",
            if ordering { "ok" } else { "violated" },
            ratios.iter().map(|(p, x)| format!("{p} {x:.2}")).collect::<Vec<_>>().join(", "),
            if ratios_ok { "ok" } else { "violated" }
        ),
    );
}

fn criterion_6(rep: &mut Report, o: &SweepOutcome) {
    let t = table(o);
    let m = |phy| mean(&t, phy, SchedulerId::Orchestra, 100, "latency_p50_s");
    let (m2, m1, m500, m154, m125) = (
        m(PhyId::Bt2M),
        m(PhyId::Bt1M),
        m(PhyId::Bt500K),
        m(PhyId::Ieee802154),
        m(PhyId::Bt125K),
    );
    let ordering = m2 <= m1 && m1 < m500 && m500 <= m154 && m154 < m125;
    let band = [m2, m1].iter().all(|x| (0.1..=1.5).contains(x));
    rep.record(
        6,
        ordering && band,
        format!(
            "industrial/orchestra n=100 median latency s: 2m {m2:.4}, 1m {m1:.4}, 500k {m500:.4}, 15.4 {m154:.4}, 125k {m125:.4} (ordering {}, 2m/1m in [0.1,1.5] {})",
            if ordering { "ok" } else { "violated" },
            if band { "ok" } else { "violated" }
        ),
    );
}

fn criterion_7(rep: &mut Report) {
    let phys = [PhyId::Bt2M, PhyId::Bt125K];
    let scheds = SchedulerId::ALL;
    let render = |o: &SweepOutcome| {
        let rows = aggregate_rows(&o.aggregates);
        (
            aggregate_csv(&rows),
            aggregate_json(&rows),
            per_run_csv(&o.runs),
        )
    };
    let serial = sweep(&phys, &scheds, EnvId::Home, &[10, 30], 3, Some(1));
    let again = sweep(&phys, &scheds, EnvId::Home, &[10, 30], 3, Some(1));
    let parallel = sweep(&phys, &scheds, EnvId::Home, &[10, 30], 3, Some(4));
    let same = render(&serial) == render(&again) && render(&serial) == render(&parallel);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    write_outputs(&serial, dirs[0].path(), true).unwrap();
    write_outputs(&parallel, dirs[1].path(), true).unwrap();
    let files_same = ["aggregate.csv", "aggregate.json", "per_run.csv"]
        .iter()
        .all(|f| {
            std::fs::read(dirs[0].path().join(f)).unwrap()
                == std::fs::read(dirs[1].path().join(f)).unwrap()
        });
    rep.record(
        7,
        same && files_same,
        format!("rerun and --jobs 1 vs 4 byte-identical: in-memory {same}, files {files_same}"),
    );
}

fn criterion_9(rep: &mut Report) {
    // two-node perfect link
    let mut pdr_fail = Vec::new();
    for phy in PhyId::ALL {
        for sched in SchedulerId::ALL {
            let mut cfg = ScenarioConfig::new(phy, sched, EnvId::Home, 2);
            cfg.in_flight_policy = InFlightPolicy::ExcludeTail;
            cfg.app_period_s = 10.0;
            let topo = Topology::from_positions(vec![(0.0, 0.0), (5.0, 0.0)], 5.0).unwrap();
            let mut w = World::new(&cfg, &topo, BASE_SEED, RunOptions::default());
            w.force_join(NodeId(1), NodeId::ROOT);
            let r = w.run().unwrap();
            if compute_pdr(&r) != Some(1.0)
                || r.queue_drops() + r.retry_losses() + r.routing_drops() != 0
            {
                pdr_fail.push(format!("{phy}/{sched}"));
            }
        }
    }
    // 4-node line, frame 3 -> 2 must climb to the root and come back down
    let mut cfg = ScenarioConfig::new(PhyId::Bt2M, SchedulerId::Orchestra, EnvId::Home, 4);
    cfg.app_period_s = 1e9;
    let topo =
        Topology::from_positions((0..4).map(|i| (20.0 * i as f64, 0.0)).collect(), 80.0).unwrap();
    let mut w = World::new(&cfg, &topo, BASE_SEED, RunOptions { trace: true });
    while w.nodes().iter().any(|n| n.rpl.rank.is_none()) {
        w.advance_slot().unwrap();
    }
    let id = w.inject_data(NodeId(3), NodeId(2)).unwrap();
    let r = w.run().unwrap();
    let mut path = vec![3u16];
    for e in r
        .trace
        .iter()
        .filter(|e| e.frame_id == Some(id) && e.kind == TraceKind::Hop)
    {
        path.push(e.dst.unwrap().0);
    }
    let delivered = matches!(
        r.frames[id as usize].fate,
        FrameFate::Delivered { hops: 5, .. }
    );
    let route_ok = delivered && path == [3, 2, 1, 0, 1, 2];
    // channel hopping against a brute-force walk of the sequence
    let seq: Vec<u8> = (0..16).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(BASE_SEED);
    let hop_ok = (0..1000).all(|_| {
        let asn: u64 = rng.random_range(0..200_000);
        let off: u32 = rng.random_range(0..16);
        let mut idx = 0;
        for _ in 0..(asn + u64::from(off)) {
            idx = (idx + 1) % seq.len();
        }
        hop_channel(asn, off, &seq) == seq[idx]
    });
    rep.record(
        9,
        pdr_fail.is_empty() && route_ok && hop_ok,
        format!(
            "two-node PDR 1.0 on 10 combos: {}; line route {path:?}; hopping 1000/1000: {hop_ok}",
            if pdr_fail.is_empty() {
                "ok".to_string()
            } else {
                format!("failed {}", pdr_fail.join(" "))
            }
        ),
    );
}

fn main() -> ExitCode {
    let mut rep = Report {
        results: Vec::new(),
    };
    criterion_1(&mut rep);
    criterion_2(&mut rep);

    let c3 = sweep(
        &[PhyId::Bt2M, PhyId::Bt500K, PhyId::Bt125K, PhyId::Ieee802154],
        &[SchedulerId::Orchestra],
        EnvId::Home,
        &[50],
        REPS,
        None,
    );
    criterion_3(&mut rep, &c3);
    let c4 = sweep(
        &[PhyId::Bt125K, PhyId::Bt500K],
        &[SchedulerId::Minimal],
        EnvId::Industrial,
        &[50, 150],
        REPS,
        None,
    );
    criterion_4(&mut rep, &c4);
    let c56 = sweep(
        &PhyId::ALL,
        &SchedulerId::ALL,
        EnvId::Industrial,
        &[100],
        REPS,
        None,
    );
    criterion_5(&mut rep, &c56);
    criterion_6(&mut rep, &c56);
    criterion_7(&mut rep);

    let (runs, bad) = conservation(&[&c3, &c4, &c56]);
    rep.record(
        8,
        bad == 0 && runs > 0,
        format!("{runs} runs checked, {bad} violations or failed runs"),
    );
    criterion_9(&mut rep);

    let failed: Vec<u8> = rep.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", rep.results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
