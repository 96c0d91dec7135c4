//! The TSCH MAC, stepped one timeslot at a time.
//!
//! A [`World`] owns every node of one run. Each call to
//! [`World::advance_slot`] fires due timers (application traffic, EBs, DIOs,
//! keep-alives), lets every node pick at most one cell, resolves all
//! transmissions of the slot through the [`Medium`], completes ACK exchanges,
//! and updates queues, backoff windows and radio-on counters. All nodes share
//! one slot clock; there is no drift.

mod frame;
mod node;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use frame::{Frame, FrameKind, CONTROL_ID_BASE};
pub use node::{
    retransmit_or_drop, shared_backoff_update, Backoff, Enqueue, NodeState, Retry, TxOutcome,
};

use crate::config::{
    ack_airtime_us, frame_airtime_us, EnvironmentProfile, PhyProfile, ScenarioConfig, SchedulerId,
};
use crate::error::SimError;
use crate::medium::{Destination, Listener, Medium, Reception, TransmissionAttempt};
use crate::metrics::{FrameFate, FrameRecord, NodeReport, RunResult};
use crate::rpl::{self, NextHop, ParentDecision, RouteHeader, RplState};
use crate::schedule::{
    hop_channel, minimal_cells, orchestra_cells_into, Cell, CellKind, OrchestraState,
};
use crate::seeding::mix_seed;
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record delivery/drop/collision events.
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// A data frame crossed one link.
    Hop,
    Delivery,
    QueueDrop,
    RetryLoss,
    RoutingDrop,
    Collision,
}

impl TraceKind {
    fn name(self) -> &'static str {
        match self {
            TraceKind::Hop => "hop",
            TraceKind::Delivery => "delivery",
            TraceKind::QueueDrop => "queue_drop",
            TraceKind::RetryLoss => "retry_loss",
            TraceKind::RoutingDrop => "routing_drop",
            TraceKind::Collision => "collision",
        }
    }
}

/// One trace line: `asn,type,src,dst,frame_id`. For collisions `src` is the
/// listener and the remaining fields are empty; for hops `src` and `dst` are
/// the link ends, otherwise the frame's end points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub asn: u64,
    pub kind: TraceKind,
    pub src: NodeId,
    pub dst: Option<NodeId>,
    pub frame_id: Option<u64>,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},", self.asn, self.kind.name(), self.src)?;
        if let Some(d) = self.dst {
            write!(f, "{d}")?;
        }
        f.write_str(",")?;
        if let Some(id) = self.frame_id {
            write!(f, "{id}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Sleep,
    /// Not yet joined; hears EBs on any channel, radio time not counted.
    Scan,
    Listen {
        channel: u8,
    },
    Transmit {
        queue_index: usize,
        channel: u8,
        shared: bool,
    },
}

/// One transmission of the slot and whether it was acknowledged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxRecord {
    pub sender: NodeId,
    pub kind: FrameKind,
    /// `None` for broadcasts.
    pub receiver: Option<NodeId>,
    pub airtime_us: u32,
    pub acked: bool,
}

/// What happened in a single slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotEvents {
    pub asn: u64,
    pub tx: Vec<TxRecord>,
    pub transmissions: usize,
    pub receptions: usize,
    pub collisions: usize,
    pub deliveries: usize,
    pub joins: usize,
}

pub struct World {
    cfg: ScenarioConfig,
    phy: PhyProfile,
    medium: Medium,
    nodes: Vec<NodeState>,
    /// Preferred parent of every node, as known to the root.
    parents: Vec<Option<NodeId>>,
    ledger: Vec<FrameRecord>,
    trace: Option<Vec<TraceEvent>>,
    asn: u64,
    end_asn: u64,
    slot_us: u64,
    seed: u64,
    next_control_id: u64,
    ack_air_us: u64,
    actions: Vec<Action>,
    attempts: Vec<TransmissionAttempt>,
    listeners: Vec<Listener>,
    cells: Vec<Cell>,
    hops_buf: Vec<NodeId>,
}

impl World {
    /// Builds the world at ASN 0 with only the root joined.
    pub fn new(cfg: &ScenarioConfig, topology: &Topology, seed: u64, opts: RunOptions) -> World {
        let phy = cfg.phy();
        let env: EnvironmentProfile = cfg.env_id.profile();
        let medium = Medium::new(topology, &phy, &env);
        let slot_us = u64::from(phy.slot_duration_us);
        let duration_us = (cfg.sim_duration_s * 1e6).round() as u64;
        let nodes = topology
            .nodes()
            .map(|id| {
                NodeState::new(
                    id,
                    cfg.backoff_min_be,
                    ChaCha8Rng::seed_from_u64(mix_seed(seed, 1, u64::from(id.0))),
                )
            })
            .collect();
        let mut world = World {
            cfg: cfg.clone(),
            ack_air_us: u64::from(ack_airtime_us(&phy)),
            phy,
            medium,
            nodes,
            parents: vec![None; topology.len()],
            ledger: Vec::new(),
            trace: opts.trace.then(Vec::new),
            asn: 0,
            end_asn: duration_us / slot_us,
            slot_us,
            seed,
            next_control_id: CONTROL_ID_BASE,
            actions: Vec::new(),
            attempts: Vec::new(),
            listeners: Vec::new(),
            cells: Vec::new(),
            hops_buf: Vec::new(),
        };
        world.bring_up_root();
        world
    }

    fn bring_up_root(&mut self) {
        let root = &mut self.nodes[NodeId::ROOT.index()];
        root.joined = true;
        root.join_time_us = Some(0);
        root.rpl = RplState::root();
        self.start_node_timers(NodeId::ROOT, 0);
    }

    fn start_node_timers(&mut self, id: NodeId, now: u64) {
        let eb_us = secs_to_us(self.cfg.eb_period_s);
        let app_us = secs_to_us(self.cfg.app_period_s);
        let ka_us = self.cfg.ka_period_s.map(secs_to_us);
        let node = &mut self.nodes[id.index()];
        rpl::trickle_reset(&mut node.rpl, now, &self.cfg.rpl, &mut node.rng);
        node.next_eb_us = Some(now + node.rng.random_range(0..eb_us.max(1)));
        node.next_app_us = Some(now + node.rng.random_range(0..app_us.max(1)));
        node.next_ka_us = if id == NodeId::ROOT {
            None
        } else {
            ka_us.map(|p| now + p)
        };
    }

    pub fn asn(&self) -> u64 {
        self.asn
    }

    pub fn now_us(&self) -> u64 {
        self.asn * self.slot_us
    }

    pub fn end_asn(&self) -> u64 {
        self.end_asn
    }

    pub fn slot_duration_us(&self) -> u64 {
        self.slot_us
    }

    pub fn phy(&self) -> &PhyProfile {
        &self.phy
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut NodeState {
        &mut self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn parents(&self) -> &[Option<NodeId>] {
        &self.parents
    }

    pub fn ledger(&self) -> &[FrameRecord] {
        &self.ledger
    }

    pub fn is_finished(&self) -> bool {
        self.asn >= self.end_asn
    }

    /// Makes `id` joined right now with `parent` as time source and parent,
    /// skipping the scan. Useful to set up hand-built scenarios.
    pub fn force_join(&mut self, id: NodeId, parent: NodeId) {
        let now = self.now_us();
        let parent_rank = self.nodes[parent.index()].rpl.rank.unwrap_or(0);
        self.join(id, parent, parent_rank, now);
    }

    /// Generates an application frame at `source` for `destination` now,
    /// outside the periodic traffic. Returns its ledger id.
    pub fn inject_data(&mut self, source: NodeId, destination: NodeId) -> Result<u64, SimError> {
        let id = self.ledger.len() as u64;
        self.create_data_frame(source, destination, self.now_us())?;
        Ok(id)
    }

    fn push_trace(
        &mut self,
        kind: TraceKind,
        src: NodeId,
        dst: Option<NodeId>,
        frame_id: Option<u64>,
    ) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent {
                asn: self.asn,
                kind,
                src,
                dst,
                frame_id,
            });
        }
    }

    fn control_id(&mut self) -> u64 {
        let id = self.next_control_id;
        self.next_control_id += 1;
        id
    }

    fn set_fate(&mut self, frame_id: u64, fate: FrameFate) -> Result<(), SimError> {
        let rec = &mut self.ledger[frame_id as usize];
        if rec.fate != FrameFate::InFlight {
            return Err(SimError::Invariant {
                asn: self.asn,
                what: format!(
                    "frame {frame_id} already settled as {:?}, now {:?}",
                    rec.fate, fate
                ),
            });
        }
        rec.fate = fate;
        let (src, dst) = (rec.source, rec.destination);
        let kind = match fate {
            FrameFate::Delivered { .. } => TraceKind::Delivery,
            FrameFate::QueueDrop => TraceKind::QueueDrop,
            FrameFate::RetryLoss => TraceKind::RetryLoss,
            FrameFate::RoutingDrop => TraceKind::RoutingDrop,
            FrameFate::InFlight => return Ok(()),
        };
        self.push_trace(kind, src, Some(dst), Some(frame_id));
        Ok(())
    }

    fn join(&mut self, id: NodeId, sender: NodeId, sender_rank: u16, now: u64) {
        let node = &mut self.nodes[id.index()];
        node.joined = true;
        node.join_time_us = Some(now);
        node.time_source = Some(sender);
        rpl::process_dio(&mut node.rpl, sender, sender_rank);
        self.parents[id.index()] = node.rpl.preferred_parent;
        self.start_node_timers(id, now);
    }

    fn on_dio(&mut self, id: NodeId, sender: NodeId, sender_rank: u16, now: u64) {
        let node = &mut self.nodes[id.index()];
        if let ParentDecision::ParentChanged { parent, .. } =
            rpl::process_dio(&mut node.rpl, sender, sender_rank)
        {
            node.time_source = Some(parent);
            self.parents[id.index()] = Some(parent);
            rpl::trickle_reset(&mut node.rpl, now, &self.cfg.rpl, &mut node.rng);
        }
    }

    fn generate_app_frame(&mut self, id: NodeId, at_us: u64) -> Result<(), SimError> {
        let n = self.nodes.len() as u16;
        let node = &mut self.nodes[id.index()];
        let mut dest = NodeId(node.rng.random_range(0..n - 1));
        if dest >= id {
            dest = NodeId(dest.0 + 1);
        }
        self.create_data_frame(id, dest, at_us)
    }

    fn create_data_frame(&mut self, id: NodeId, dest: NodeId, at_us: u64) -> Result<(), SimError> {
        let frame_id = self.ledger.len() as u64;
        self.ledger.push(FrameRecord {
            source: id,
            destination: dest,
            generated_at_us: at_us,
            fate: FrameFate::InFlight,
        });
        let frame = Frame {
            frame_id,
            kind: FrameKind::Data,
            source: id,
            next_hop: None,
            payload_bytes: self.phy.app_packet_bytes,
            generated_at_us: at_us,
            retries_used: 0,
            sender_rank: 0,
            hops: 0,
            route: RouteHeader {
                destination: dest,
                ..Default::default()
            },
        };
        self.route_and_enqueue(id, frame).map(|_| ())
    }

    /// Routes a data frame held by `id` and queues it for the next hop, or
    /// settles its fate. Returns whether `id` was the destination.
    fn route_and_enqueue(&mut self, id: NodeId, mut frame: Frame) -> Result<bool, SimError> {
        match rpl::route_next_hop(id, &self.parents, &mut frame.route) {
            Ok(NextHop::Deliver) => {
                let latency = (self.asn + 1) * self.slot_us - frame.generated_at_us;
                self.set_fate(
                    frame.frame_id,
                    FrameFate::Delivered {
                        latency_us: latency,
                        hops: frame.hops,
                    },
                )?;
                Ok(true)
            }
            Ok(NextHop::Forward(next)) => {
                frame.next_hop = Some(next);
                frame.retries_used = 0;
                let frame_id = frame.frame_id;
                if self.nodes[id.index()].enqueue(frame, self.cfg.queue_capacity)
                    == Enqueue::QueueFull
                {
                    self.set_fate(frame_id, FrameFate::QueueDrop)?;
                }
                Ok(false)
            }
            Err(_) => {
                self.set_fate(frame.frame_id, FrameFate::RoutingDrop)?;
                Ok(false)
            }
        }
    }

    fn run_timers(&mut self, now: u64) -> Result<(), SimError> {
        let app_us = secs_to_us(self.cfg.app_period_s);
        let eb_us = secs_to_us(self.cfg.eb_period_s);
        for i in 0..self.nodes.len() {
            let id = NodeId(i as u16);
            if !self.nodes[i].joined {
                continue;
            }
            while let Some(t) = self.nodes[i].next_app_us.filter(|&t| t <= now) {
                self.nodes[i].next_app_us = Some(t + app_us);
                self.generate_app_frame(id, t)?;
            }
            if self.nodes[i].next_eb_us.is_some_and(|t| t <= now) {
                let jitter = eb_us / 5;
                let next = now + eb_us - jitter / 2 + self.nodes[i].rng.random_range(0..=jitter);
                self.nodes[i].next_eb_us = Some(next);
                if let Some(rank) = self.nodes[i].rpl.rank {
                    if !self.nodes[i].has_queued(FrameKind::Eb) {
                        let f = Frame::broadcast(
                            self.control_id(),
                            FrameKind::Eb,
                            id,
                            self.cfg.eb_payload_bytes,
                            now,
                            rank,
                        );
                        // a full queue simply skips this beacon
                        let _ = self.nodes[i].enqueue(f, self.cfg.queue_capacity);
                    }
                }
            }
            let node = &mut self.nodes[i];
            if rpl::trickle_poll(&mut node.rpl, now, &self.cfg.rpl, &mut node.rng) {
                if let Some(rank) = self.nodes[i].rpl.rank {
                    if !self.nodes[i].has_queued(FrameKind::Dio) {
                        let f = Frame::broadcast(
                            self.control_id(),
                            FrameKind::Dio,
                            id,
                            self.cfg.rpl.dio_payload_bytes,
                            now,
                            rank,
                        );
                        let _ = self.nodes[i].enqueue(f, self.cfg.queue_capacity);
                    }
                }
            }
            if let (Some(t), Some(period)) = (self.nodes[i].next_ka_us, self.cfg.ka_period_s) {
                if t <= now {
                    self.nodes[i].next_ka_us = Some(t + secs_to_us(period));
                    if let Some(ts) = self.nodes[i].time_source {
                        if !self.nodes[i].has_queued(FrameKind::Ka) {
                            let mut f =
                                Frame::broadcast(self.control_id(), FrameKind::Ka, id, 0, now, 0);
                            f.next_hop = Some(ts);
                            let _ = self.nodes[i].enqueue(f, self.cfg.queue_capacity);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn plan_actions(&mut self) {
        let asn = self.asn;
        let seq = &self.cfg.hopping_sequence;
        let sched = self.cfg.scheduler_id;
        self.actions.clear();
        for node in self.nodes.iter_mut() {
            if !node.joined {
                self.actions.push(Action::Scan);
                continue;
            }
            self.cells.clear();
            match sched {
                SchedulerId::Minimal => {
                    self.cells
                        .extend(minimal_cells(node.id, asn, &self.cfg.minimal))
                }
                SchedulerId::Orchestra => {
                    self.hops_buf.clear();
                    self.hops_buf.extend(
                        node.queue
                            .iter()
                            .filter(|f| f.kind == FrameKind::Data)
                            .filter_map(|f| f.next_hop),
                    );
                    let st = OrchestraState {
                        time_source: node.time_source,
                        eb_pending: node.has_queued(FrameKind::Eb),
                        unicast_next_hops: &self.hops_buf,
                    };
                    orchestra_cells_into(node.id, asn, &self.cfg.orchestra, &st, &mut self.cells);
                }
            }
            let action = self
                .cells
                .iter()
                .find_map(|cell| {
                    cell_action(
                        node,
                        cell,
                        sched,
                        hop_channel(asn, cell.channel_offset, seq),
                    )
                })
                .unwrap_or(Action::Sleep);
            self.actions.push(action);
        }
    }

    fn add_radio(&mut self, id: NodeId, us: u64) {
        self.nodes[id.index()].radio_on_us += us.min(self.slot_us);
    }

    /// Runs one timeslot and advances the ASN.
    pub fn advance_slot(&mut self) -> Result<SlotEvents, SimError> {
        let now = self.now_us();
        let mut ev = SlotEvents {
            asn: self.asn,
            ..Default::default()
        };
        self.run_timers(now)?;
        self.plan_actions();

        self.attempts.clear();
        let mut senders: Vec<(NodeId, usize, bool)> = Vec::new();
        for (i, action) in self.actions.iter().enumerate() {
            if let Action::Transmit {
                queue_index,
                channel,
                shared,
            } = *action
            {
                let f = &self.nodes[i].queue[queue_index];
                self.attempts.push(TransmissionAttempt {
                    sender: NodeId(i as u16),
                    channel,
                    kind: f.kind,
                    destination: f
                        .next_hop
                        .map_or(Destination::Broadcast, Destination::Unicast),
                    frame_id: f.frame_id,
                    airtime_us: frame_airtime_us(&self.phy, f.payload_bytes),
                    payload_bytes: f.payload_bytes,
                });
                senders.push((NodeId(i as u16), queue_index, shared));
            }
        }
        ev.transmissions = self.attempts.len();

        self.listeners.clear();
        let mut eb_channels: Vec<u8> = self
            .attempts
            .iter()
            .filter(|a| a.kind == FrameKind::Eb)
            .map(|a| a.channel)
            .collect();
        eb_channels.sort_unstable();
        eb_channels.dedup();
        for (i, action) in self.actions.iter().enumerate() {
            let id = NodeId(i as u16);
            match *action {
                Action::Listen { channel } => self.listeners.push(Listener { id, channel }),
                Action::Scan => self
                    .listeners
                    .extend(eb_channels.iter().map(|&channel| Listener { id, channel })),
                _ => {}
            }
        }
        let outcomes = if self.attempts.is_empty() {
            Vec::new()
        } else {
            self.medium.resolve(&self.attempts, &self.listeners)
        };

        let mut acked = vec![false; self.attempts.len()];
        let mut joins: Vec<(NodeId, NodeId, u16)> = Vec::new();
        let listeners = std::mem::take(&mut self.listeners);
        for (idx, l) in listeners.iter().enumerate() {
            let id = l.id;
            let result = outcomes.get(idx).map_or(Reception::Silence, |o| o.result);
            if !self.nodes[id.index()].joined {
                if let Reception::Received { attempt, .. } = result {
                    let a = self.attempts[attempt];
                    if a.kind == FrameKind::Eb && !joins.iter().any(|j| j.0 == id) {
                        let rank = self.nodes[a.sender.index()]
                            .queue
                            .iter()
                            .find(|f| f.frame_id == a.frame_id)
                            .map_or(0, |f| f.sender_rank);
                        joins.push((id, a.sender, rank));
                    }
                }
                continue;
            }
            match result {
                Reception::Silence => self.add_radio(id, u64::from(self.phy.rx_wait_us)),
                Reception::Collision => {
                    let air = self
                        .attempts
                        .iter()
                        .filter(|a| {
                            a.channel == l.channel
                                && a.sender != id
                                && self.medium.in_range(a.sender, id)
                        })
                        .map(|a| u64::from(a.airtime_us))
                        .max()
                        .unwrap_or(0);
                    self.add_radio(id, air);
                    self.nodes[id.index()].collisions += 1;
                    ev.collisions += 1;
                    self.push_trace(TraceKind::Collision, id, None, None);
                }
                Reception::Received { attempt, .. } => {
                    ev.receptions += 1;
                    let a = self.attempts[attempt];
                    let air = u64::from(a.airtime_us);
                    match a.destination {
                        Destination::Unicast(d) if d == id => {
                            acked[attempt] = true;
                            self.add_radio(id, air + self.ack_air_us);
                            let (_, qi, _) =
                                senders.iter().find(|s| s.0 == a.sender).copied().unwrap();
                            let mut frame = self.nodes[a.sender.index()].queue[qi].clone();
                            frame.hops += 1;
                            if frame.kind == FrameKind::Data {
                                self.push_trace(
                                    TraceKind::Hop,
                                    a.sender,
                                    Some(id),
                                    Some(frame.frame_id),
                                );
                                if self.route_and_enqueue(id, frame)? {
                                    ev.deliveries += 1;
                                }
                            }
                        }
                        Destination::Unicast(_) => self.add_radio(id, air),
                        Destination::Broadcast => {
                            self.add_radio(id, air);
                            if a.kind == FrameKind::Dio {
                                let (_, qi, _) =
                                    senders.iter().find(|s| s.0 == a.sender).copied().unwrap();
                                let rank = self.nodes[a.sender.index()].queue[qi].sender_rank;
                                self.on_dio(id, a.sender, rank, now);
                            }
                        }
                    }
                }
            }
        }
        self.listeners = listeners;
        ev.joins = joins.len();
        for (id, sender, rank) in joins {
            self.join(id, sender, rank, now);
        }

        let (min_be, max_be, max_retries) = (
            self.cfg.backoff_min_be,
            self.cfg.backoff_max_be,
            self.cfg.max_retries,
        );
        let ack_wait = u64::from(self.phy.ack_wait_us);
        for (k, &(id, qi, shared)) in senders.iter().enumerate() {
            let a = self.attempts[k];
            let air = u64::from(a.airtime_us);
            let node = &mut self.nodes[id.index()];
            let outcome = match a.destination {
                Destination::Broadcast => {
                    node.radio_on_us += air.min(self.slot_us);
                    node.queue.remove(qi);
                    TxOutcome::Success
                }
                Destination::Unicast(_) if acked[k] => {
                    node.radio_on_us += (air + ack_wait + self.ack_air_us).min(self.slot_us);
                    node.queue.remove(qi);
                    TxOutcome::Success
                }
                Destination::Unicast(_) => {
                    node.radio_on_us += (air + ack_wait).min(self.slot_us);
                    let frame = node.queue.remove(qi).expect("sender frame present");
                    match retransmit_or_drop(frame, max_retries) {
                        Retry::Requeued(f) => node.queue.push_front(f),
                        Retry::Lost(f) => {
                            if f.kind == FrameKind::Data {
                                self.set_fate(f.frame_id, FrameFate::RetryLoss)?;
                            }
                        }
                    }
                    TxOutcome::NoAck
                }
            };
            if shared {
                let node = &mut self.nodes[id.index()];
                shared_backoff_update(&mut node.backoff, outcome, min_be, max_be, &mut node.rng);
            }
            ev.tx.push(TxRecord {
                sender: id,
                kind: a.kind,
                receiver: match a.destination {
                    Destination::Unicast(d) => Some(d),
                    Destination::Broadcast => None,
                },
                airtime_us: a.airtime_us,
                acked: acked[k],
            });
        }

        self.asn += 1;
        Ok(ev)
    }

    /// Runs to the configured end and returns the per-run ledger.
    pub fn run(mut self) -> Result<RunResult, SimError> {
        while !self.is_finished() {
            self.advance_slot()?;
        }
        self.finish()
    }

    /// Closes the run at the current ASN.
    pub fn finish(self) -> Result<RunResult, SimError> {
        let sim_end_us = self.now_us();
        let mut queued_data: Vec<u64> = self
            .nodes
            .iter()
            .flat_map(|n| n.queue.iter())
            .filter(|f| f.kind == FrameKind::Data)
            .map(|f| f.frame_id)
            .collect();
        queued_data.sort_unstable();
        let total = queued_data.len();
        queued_data.dedup();
        if queued_data.len() != total {
            return Err(SimError::Invariant {
                asn: self.asn,
                what: "a data frame is queued at two nodes".into(),
            });
        }
        let in_flight = self
            .ledger
            .iter()
            .filter(|r| r.fate == FrameFate::InFlight)
            .count();
        if in_flight != total {
            return Err(SimError::Invariant {
                asn: self.asn,
                what: format!("ledger has {in_flight} frames in flight but {total} are queued"),
            });
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeReport {
                radio_on_us: n.radio_on_us,
                join_time_us: n.join_time_us,
                joined_duration_us: n.join_time_us.map_or(0, |t| sim_end_us.saturating_sub(t)),
                collisions: n.collisions,
                rank: n.rpl.rank,
            })
            .collect();
        let result = RunResult {
            phy: self.cfg.phy_id,
            scheduler: self.cfg.scheduler_id,
            env: self.cfg.env_id,
            node_count: self.nodes.len(),
            seed: self.seed,
            slot_duration_us: self.slot_us,
            sim_end_us,
            in_flight_policy: self.cfg.in_flight_policy,
            frames: self.ledger,
            nodes,
            trace: self.trace.unwrap_or_default(),
        };
        result
            .check_conservation()
            .map_err(|what| SimError::Invariant {
                asn: self.asn,
                what,
            })?;
        Ok(result)
    }
}

/// What `node` does in `cell`, or `None` to fall through to the next
/// candidate. Cells contended by several senders (the shared cell, and the
/// receiver-based unicast cells, which every neighbour of the receiver may
/// use) are subject to the backoff counter; EB cells belong to one sender.
fn cell_action(
    node: &mut NodeState,
    cell: &Cell,
    sched: SchedulerId,
    channel: u8,
) -> Option<Action> {
    let transmit = |queue_index, shared| Action::Transmit {
        queue_index,
        channel,
        shared,
    };
    match cell.kind {
        CellKind::EbRx | CellKind::Rx => Some(Action::Listen { channel }),
        CellKind::EbTx => node
            .queue
            .iter()
            .position(|f| f.kind == FrameKind::Eb)
            .map(|qi| transmit(qi, false)),
        CellKind::TxUnicast => {
            let qi = node
                .queue
                .iter()
                .position(|f| f.kind == FrameKind::Data && f.next_hop == cell.peer)?;
            if node.backoff.counter > 0 {
                node.backoff.counter -= 1;
                None
            } else {
                Some(transmit(qi, true))
            }
        }
        CellKind::Shared => {
            let eligible = match sched {
                SchedulerId::Minimal => (!node.queue.is_empty()).then_some(0),
                SchedulerId::Orchestra => node
                    .queue
                    .iter()
                    .position(|f| matches!(f.kind, FrameKind::Dio | FrameKind::Ka)),
            };
            Some(match eligible {
                Some(_) if node.backoff.counter > 0 => {
                    node.backoff.counter -= 1;
                    Action::Listen { channel }
                }
                Some(qi) => transmit(qi, true),
                None => Action::Listen { channel },
            })
        }
    }
}

fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

/// Runs one repetition of `cfg` on `topology` with `seed`.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    topology: &Topology,
    seed: u64,
    opts: RunOptions,
) -> Result<RunResult, SimError> {
    World::new(cfg, topology, seed, opts).run()
}
