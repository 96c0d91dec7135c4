//! Random connected meshes.
//!
//! Nodes are dropped uniformly in a square around a root at the centre. The
//! square is sized so that the expected degree under the BT5 2M range of the
//! environment is 6.5, and placements are redrawn until that graph is
//! connected and its mean degree lies in [5.8, 7.2]. Every PHY reuses the same
//! positions.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{phy_profile, EnvId, PhyId};
use crate::error::TopologyError;
use crate::seeding::mix_seed;

pub const TARGET_DEGREE: f64 = 6.5;
pub const DEGREE_WINDOW: (f64, f64) = (5.8, 7.2);
pub const MAX_ATTEMPTS: u32 = 1000;
/// Below this node count a mean degree of 5.8 cannot be reached, so only
/// connectivity is enforced.
pub const MIN_NODES_FOR_DEGREE_WINDOW: usize = 9;

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct NodeId(pub u16);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<(f64, f64)>,
    area_side_m: f64,
}

impl Topology {
    pub fn from_positions(
        positions: Vec<(f64, f64)>,
        area_side_m: f64,
    ) -> Result<Self, TopologyError> {
        if positions.len() < 2 {
            return Err(TopologyError::TooFewNodes(positions.len()));
        }
        if positions.len() > u16::MAX as usize {
            return Err(TopologyError::BadPositions {
                line: 0,
                reason: "too many nodes".into(),
            });
        }
        Ok(Topology {
            positions,
            area_side_m,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn area_side_m(&self) -> f64 {
        self.area_side_m
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len() as u16).map(NodeId)
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let (ax, ay) = self.positions[a.index()];
        let (bx, by) = self.positions[b.index()];
        (ax - bx).hypot(ay - by)
    }

    /// Neighbour lists under a disk of radius `range_m`, sorted by id.
    pub fn adjacency(&self, range_m: f64) -> Vec<Vec<NodeId>> {
        let n = self.len();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (NodeId(i as u16), NodeId(j as u16));
                if self.distance(a, b) <= range_m {
                    adj[i].push(b);
                    adj[j].push(a);
                }
            }
        }
        adj
    }

    pub fn mean_degree(&self, range_m: f64) -> f64 {
        let total: usize = self.adjacency(range_m).iter().map(Vec::len).sum();
        total as f64 / self.len() as f64
    }

    /// BFS hop counts from `from`; `None` for unreachable nodes.
    pub fn hop_distances(&self, range_m: f64, from: NodeId) -> Vec<Option<u32>> {
        let adj = self.adjacency(range_m);
        bfs(&adj, from)
    }

    pub fn is_connected(&self, range_m: f64) -> bool {
        self.hop_distances(range_m, NodeId::ROOT)
            .iter()
            .all(Option::is_some)
    }

    /// Writes `node_id,x,y` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "node_id,x,y")?;
        for (i, (x, y)) in self.positions.iter().enumerate() {
            writeln!(w, "{i},{x},{y}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`Topology::write_csv`]. Node ids must
    /// cover `0..n` exactly once, in any order.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TopologyError> {
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line_no = lineno + 1;
            let line = line.map_err(|e| TopologyError::BadPositions {
                line: line_no,
                reason: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty()
                || line.starts_with('#')
                || (lineno == 0 && line.starts_with("node_id"))
            {
                continue;
            }
            let bad = |reason: &str| TopologyError::BadPositions {
                line: line_no,
                reason: reason.to_string(),
            };
            let mut parts = line.split(',').map(str::trim);
            let id = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad node_id"))?;
            let x = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad x"))?;
            let y = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad y"))?;
            if parts.next().is_some() {
                return Err(bad("expected 3 columns"));
            }
            rows.push((id, x, y));
        }
        rows.sort_by_key(|r| r.0);
        for (expect, row) in rows.iter().enumerate() {
            if row.0 != expect {
                return Err(TopologyError::BadPositions {
                    line: 0,
                    reason: format!("node ids must be 0..{} without gaps", rows.len()),
                });
            }
        }
        let positions: Vec<(f64, f64)> = rows.into_iter().map(|(_, x, y)| (x, y)).collect();
        let side = positions.iter().fold(0.0f64, |m, &(x, y)| m.max(x).max(y));
        Topology::from_positions(positions, side)
    }
}

pub(crate) fn bfs(adj: &[Vec<NodeId>], from: NodeId) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[from.index()] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u.index()].unwrap();
        for &v in &adj[u.index()] {
            if dist[v.index()].is_none() {
                dist[v.index()] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Probability that two independent uniform points in a unit square lie
/// within distance `t` (valid for `0 <= t <= 1`).
pub fn pair_within_probability(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    std::f64::consts::PI * t * t - 8.0 / 3.0 * t.powi(3) + 0.5 * t.powi(4)
}

/// Side of the square that gives `TARGET_DEGREE` expected neighbours for
/// `node_count` nodes with disk radius `range_m`, edge effects included.
pub fn area_side_for(node_count: usize, range_m: f64) -> f64 {
    let target = TARGET_DEGREE / (node_count.saturating_sub(1).max(1)) as f64;
    if target >= pair_within_probability(1.0) {
        return range_m;
    }
    // p is increasing on [0, 1]
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if pair_within_probability(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    range_m / hi
}

/// Connected random mesh for `node_count` nodes in `env`.
pub fn generate_topology(
    node_count: usize,
    env: EnvId,
    seed: u64,
) -> Result<Topology, TopologyError> {
    if node_count < 2 {
        return Err(TopologyError::TooFewNodes(node_count));
    }
    let range = phy_profile(PhyId::Bt2M).range_m(env);
    let side = area_side_for(node_count, range);
    let check_degree = node_count >= MIN_NODES_FOR_DEGREE_WINDOW;

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0, u64::from(attempt)));
        let mut positions = Vec::with_capacity(node_count);
        positions.push((side / 2.0, side / 2.0));
        for _ in 1..node_count {
            positions.push((rng.random_range(0.0..side), rng.random_range(0.0..side)));
        }
        let topo = Topology::from_positions(positions, side)?;
        if !topo.is_connected(range) {
            continue;
        }
        if check_degree {
            let deg = topo.mean_degree(range);
            if !(DEGREE_WINDOW.0..=DEGREE_WINDOW.1).contains(&deg) {
                continue;
            }
        }
        return Ok(topo);
    }
    Err(TopologyError::GenerationFailed {
        nodes: node_count,
        range_m: range,
        min_degree: DEGREE_WINDOW.0,
        max_degree: DEGREE_WINDOW.1,
        attempts: MAX_ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Monte Carlo estimate of the pair probability, independent of the
    /// closed form.
    fn pair_probability_mc(t: f64, samples: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hits = (0..samples)
            .filter(|_| {
                let (ax, ay, bx, by): (f64, f64, f64, f64) =
                    (rng.random(), rng.random(), rng.random(), rng.random());
                (ax - bx).hypot(ay - by) <= t
            })
            .count();
        hits as f64 / samples as f64
    }

    #[test]
    fn pair_probability_matches_sampling() {
        for t in [0.1, 0.25, 0.5, 1.0] {
            let mc = pair_probability_mc(t, 400_000);
            assert!(
                (mc - pair_within_probability(t)).abs() < 0.004,
                "t={t} mc={mc}"
            );
        }
    }

    #[test]
    fn fifty_home_nodes() {
        let topo = generate_topology(50, EnvId::Home, 1).unwrap();
        assert_eq!(topo.len(), 50);
        assert!(topo.is_connected(23.0));
        let deg = topo.mean_degree(23.0);
        assert!((5.8..=7.2).contains(&deg), "{deg}");
        assert!(topo.mean_degree(43.0) > deg);
        let c = topo.area_side_m() / 2.0;
        assert_eq!(topo.positions()[0], (c, c));
    }

    #[test]
    fn two_nodes_adjacent() {
        for seed in 0..20 {
            let topo = generate_topology(2, EnvId::Home, seed).unwrap();
            let adj = topo.adjacency(23.0);
            assert_eq!(adj[0], vec![NodeId(1)]);
            assert_eq!(adj[1], vec![NodeId(0)]);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_topology(30, EnvId::Industrial, 99).unwrap();
        let b = generate_topology(30, EnvId::Industrial, 99).unwrap();
        assert_eq!(a, b);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_ne!(a, generate_topology(30, EnvId::Industrial, 100).unwrap());
    }

    #[test]
    fn one_node_rejected() {
        assert!(matches!(
            generate_topology(1, EnvId::Home, 0),
            Err(TopologyError::TooFewNodes(1))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let topo = generate_topology(12, EnvId::Outdoor, 5).unwrap();
        let mut buf = Vec::new();
        topo.write_csv(&mut buf).unwrap();
        let back = Topology::read_csv(&buf[..]).unwrap();
        assert_eq!(back.positions(), topo.positions());
    }

    #[test]
    fn csv_gaps_rejected() {
        let text = "node_id,x,y\n0,1,1\n2,3,3\n";
        assert!(Topology::read_csv(text.as_bytes()).is_err());
        let text = "node_id,x,y\n0,1,1\n1,x,3\n";
        assert!(matches!(
            Topology::read_csv(text.as_bytes()),
            Err(TopologyError::BadPositions { line: 3, .. })
        ));
    }

    #[test]
    fn hop_distances_line() {
        let topo = Topology::from_positions(
            vec![(0.0, 0.0), (10.0, 0.0), (20.0, 0.0), (30.0, 0.0)],
            30.0,
        )
        .unwrap();
        let d = topo.hop_distances(12.0, NodeId::ROOT);
        assert_eq!(d, vec![Some(0), Some(1), Some(2), Some(3)]);
        assert!(!topo.is_connected(9.0));
    }
}
