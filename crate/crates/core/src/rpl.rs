//! Hop-count RPL with a single DODAG rooted at node 0.
//!
//! Upward traffic follows preferred parents. Downward routes are source routes
//! built at the root from every node's current preferred parent; the root is
//! assumed to learn parent changes immediately, so no DAO frames exist.

use rand::Rng;

use crate::config::RplConfig;
use crate::topology::NodeId;

pub const ROOT_RANK: u16 = 0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RplState {
    /// Hop count to the root; `None` until the node has heard a DIO or EB.
    pub rank: Option<u16>,
    pub preferred_parent: Option<NodeId>,
    pub trickle_interval_us: u64,
    pub interval_end_us: u64,
    pub next_dio_us: Option<u64>,
    pub last_dio_at: Option<u64>,
}

impl RplState {
    pub fn root() -> Self {
        RplState {
            rank: Some(ROOT_RANK),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentDecision {
    Unchanged,
    /// Rank improved through the current parent.
    RankUpdated {
        rank: u16,
    },
    ParentChanged {
        parent: NodeId,
        rank: u16,
    },
}

/// Handles a DIO (or an EB carrying the sender's rank).
pub fn process_dio(state: &mut RplState, sender: NodeId, sender_rank: u16) -> ParentDecision {
    if state.rank == Some(ROOT_RANK) {
        return ParentDecision::Unchanged;
    }
    let offered = sender_rank.saturating_add(1);
    let adopt = match (state.rank, state.preferred_parent) {
        (None, _) => true,
        (Some(rank), _) if offered < rank => true,
        (Some(rank), Some(parent)) if offered == rank => sender < parent,
        _ => false,
    };
    if !adopt {
        return ParentDecision::Unchanged;
    }
    state.rank = Some(offered);
    if state.preferred_parent == Some(sender) {
        ParentDecision::RankUpdated { rank: offered }
    } else {
        state.preferred_parent = Some(sender);
        ParentDecision::ParentChanged {
            parent: sender,
            rank: offered,
        }
    }
}

fn i_min_us(cfg: &RplConfig) -> u64 {
    (cfg.i_min_s * 1e6).round() as u64
}

fn i_max_us(cfg: &RplConfig) -> u64 {
    i_min_us(cfg) << cfg.doublings
}

/// Opens a trickle interval at `now` with the state's current length and
/// returns the DIO emission time, uniform in the second half of the interval.
pub fn trickle_schedule<R: Rng>(state: &mut RplState, now: u64, rng: &mut R) -> u64 {
    let i = state.trickle_interval_us.max(1);
    let emit = now + i / 2 + rng.random_range(0..i - i / 2);
    state.interval_end_us = now + i;
    state.next_dio_us = Some(emit);
    emit
}

/// Restarts trickle at the minimum interval (joining or parent change).
pub fn trickle_reset<R: Rng>(state: &mut RplState, now: u64, cfg: &RplConfig, rng: &mut R) -> u64 {
    state.trickle_interval_us = i_min_us(cfg);
    trickle_schedule(state, now, rng)
}

/// Advances trickle to `now`; returns true when a DIO is due.
pub fn trickle_poll<R: Rng>(state: &mut RplState, now: u64, cfg: &RplConfig, rng: &mut R) -> bool {
    if state.trickle_interval_us == 0 {
        return false;
    }
    let mut due = false;
    if let Some(t) = state.next_dio_us {
        if t <= now {
            due = true;
            state.next_dio_us = None;
            state.last_dio_at = Some(now);
        }
    }
    if state.next_dio_us.is_none() && state.interval_end_us <= now {
        state.trickle_interval_us = (state.trickle_interval_us * 2).min(i_max_us(cfg));
        let start = state.interval_end_us;
        trickle_schedule(state, start, rng);
    }
    due
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteError {
    /// A non-root node without a preferred parent.
    NoParent,
    /// The root has no parent chain down to the destination.
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextHop {
    Deliver,
    Forward(NodeId),
}

/// Routing fields carried by a data frame.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteHeader {
    pub destination: NodeId,
    /// Set once the frame has been at the root; from then on it follows
    /// `source_route`.
    pub downward: bool,
    /// Remaining hops, last one is the destination.
    pub source_route: Vec<NodeId>,
}

/// Root-side path root -> ... -> `dest` built from preferred parents,
/// excluding the root itself.
pub fn downward_route(parents: &[Option<NodeId>], dest: NodeId) -> Result<Vec<NodeId>, RouteError> {
    let mut path = Vec::new();
    let mut cur = dest;
    while cur != NodeId::ROOT {
        if path.len() >= parents.len() {
            return Err(RouteError::Unreachable);
        }
        path.push(cur);
        cur = parents[cur.index()].ok_or(RouteError::Unreachable)?;
    }
    path.reverse();
    Ok(path)
}

/// Non-storing next hop for a frame currently held by `node`.
///
/// Before reaching the root a frame always climbs to the preferred parent,
/// even when a node on the way is the destination itself.
pub fn route_next_hop(
    node: NodeId,
    parents: &[Option<NodeId>],
    header: &mut RouteHeader,
) -> Result<NextHop, RouteError> {
    if node == NodeId::ROOT && !header.downward {
        header.downward = true;
        if header.destination == NodeId::ROOT {
            return Ok(NextHop::Deliver);
        }
        header.source_route = downward_route(parents, header.destination)?;
    }
    if header.downward {
        if node == header.destination {
            return Ok(NextHop::Deliver);
        }
        if header.source_route.is_empty() {
            return Err(RouteError::Unreachable);
        }
        return Ok(NextHop::Forward(header.source_route.remove(0)));
    }
    parents[node.index()]
        .map(NextHop::Forward)
        .ok_or(RouteError::NoParent)
}
