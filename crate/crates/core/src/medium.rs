//! Unit-disk radio medium with power capture.
//!
//! Connectivity is a pure disk: a sender outside the PHY range of a listener
//! neither delivers nor interferes. Among the in-range senders on the
//! listener's channel, the listener locks onto the strongest one (an exact
//! power tie is a collision) and decodes it when its power over the summed
//! power of the remaining candidates is high enough.
//!
//! The PHY tables quote co-channel rejection the way radio datasheets do: a
//! rejection of -8 dB means an interferer up to 8 dB below the wanted signal
//! is tolerated, so the wanted frame needs an SIR of at least +8 dB.

use crate::config::{EnvironmentProfile, PhyProfile};
use crate::engine::FrameKind;
use crate::topology::{NodeId, Topology};

/// Distances below this are clamped before the log-distance formula.
pub const MIN_DISTANCE_M: f64 = 0.1;

pub fn received_power_dbm(env: &EnvironmentProfile, distance_m: f64) -> f64 {
    let d = distance_m.max(MIN_DISTANCE_M);
    env.tx_power_dbm - env.reference_loss_db - 10.0 * env.path_loss_exponent * d.log10()
}

/// SIR needed to decode under `phy`: the negated co-channel rejection.
pub fn min_sir_db(phy: &PhyProfile) -> f64 {
    -phy.cochannel_rejection_db
}

fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Unicast(NodeId),
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionAttempt {
    pub sender: NodeId,
    pub channel: u8,
    pub kind: FrameKind,
    pub destination: Destination,
    pub frame_id: u64,
    pub airtime_us: u32,
    pub payload_bytes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Listener {
    pub id: NodeId,
    pub channel: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    /// `attempt` indexes the slice passed to the resolver.
    Received {
        attempt: usize,
        frame_id: u64,
    },
    Collision,
    Silence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptionOutcome {
    pub listener: NodeId,
    pub result: Reception,
    pub locked_sender: Option<NodeId>,
}

impl ReceptionOutcome {
    pub fn is_collision(&self) -> bool {
        self.result == Reception::Collision
    }
}

/// Pairwise link table for one topology under one PHY and environment.
#[derive(Debug, Clone)]
pub struct Medium {
    n: usize,
    in_range: Vec<bool>,
    power_dbm: Vec<f64>,
    power_mw: Vec<f64>,
    min_sir_db: f64,
}

impl Medium {
    pub fn new(topology: &Topology, phy: &PhyProfile, env: &EnvironmentProfile) -> Self {
        Self::with_range(topology, phy.range_m(env.env_id), min_sir_db(phy), env)
    }

    /// `min_sir_db` is the SIR the locked frame needs to be decoded.
    pub fn with_range(
        topology: &Topology,
        range_m: f64,
        min_sir_db: f64,
        env: &EnvironmentProfile,
    ) -> Self {
        let n = topology.len();
        let mut in_range = vec![false; n * n];
        let mut power_dbm = vec![f64::NEG_INFINITY; n * n];
        let mut power_mw = vec![0.0; n * n];
        for a in topology.nodes() {
            for b in topology.nodes() {
                if a == b {
                    continue;
                }
                let d = topology.distance(a, b);
                let k = a.index() * n + b.index();
                in_range[k] = d <= range_m;
                power_dbm[k] = received_power_dbm(env, d);
                power_mw[k] = dbm_to_mw(power_dbm[k]);
            }
        }
        Medium {
            n,
            in_range,
            power_dbm,
            power_mw,
            min_sir_db,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn in_range(&self, from: NodeId, to: NodeId) -> bool {
        self.in_range[from.index() * self.n + to.index()]
    }

    #[inline]
    pub fn power_dbm(&self, from: NodeId, to: NodeId) -> f64 {
        self.power_dbm[from.index() * self.n + to.index()]
    }

    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n as u16)
            .map(NodeId)
            .filter(move |&m| m != node && self.in_range(node, m))
    }

    /// Outcome for every listener, in listener order.
    pub fn resolve(
        &self,
        attempts: &[TransmissionAttempt],
        listeners: &[Listener],
    ) -> Vec<ReceptionOutcome> {
        let mut order: Vec<usize> = (0..attempts.len()).collect();
        order.sort_by_key(|&i| (attempts[i].sender, attempts[i].frame_id));
        listeners
            .iter()
            .map(|l| self.resolve_one(attempts, &order, l))
            .collect()
    }

    fn resolve_one(
        &self,
        attempts: &[TransmissionAttempt],
        order: &[usize],
        l: &Listener,
    ) -> ReceptionOutcome {
        let candidates: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| {
                let a = &attempts[i];
                a.channel == l.channel && a.sender != l.id && self.in_range(a.sender, l.id)
            })
            .collect();
        let power = |i: usize| self.power_dbm(attempts[i].sender, l.id);
        let mut outcome = ReceptionOutcome {
            listener: l.id,
            result: Reception::Silence,
            locked_sender: None,
        };
        let Some(&first) = candidates.first() else {
            return outcome;
        };
        let best = candidates
            .iter()
            .copied()
            .fold(first, |b, i| if power(i) > power(b) { i } else { b });
        let best_power = power(best);
        if candidates
            .iter()
            .filter(|&&i| power(i) == best_power)
            .count()
            > 1
        {
            outcome.result = Reception::Collision;
            return outcome;
        }
        let locked = attempts[best].sender;
        outcome.locked_sender = Some(locked);
        let interference_mw: f64 = candidates
            .iter()
            .filter(|&&i| i != best)
            .map(|&i| self.power_mw[attempts[i].sender.index() * self.n + l.id.index()])
            .sum();
        let decoded = interference_mw == 0.0
            || best_power - 10.0 * interference_mw.log10() >= self.min_sir_db;
        outcome.result = if decoded {
            Reception::Received {
                attempt: best,
                frame_id: attempts[best].frame_id,
            }
        } else {
            Reception::Collision
        };
        outcome
    }
}

/// One-shot resolution without keeping a [`Medium`] around.
pub fn resolve_slot_receptions(
    attempts: &[TransmissionAttempt],
    topology: &Topology,
    phy: &PhyProfile,
    env: &EnvironmentProfile,
    listeners: &[Listener],
) -> Vec<ReceptionOutcome> {
    Medium::new(topology, phy, env).resolve(attempts, listeners)
}
