use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::frame::{Frame, FrameKind};
use crate::rpl::RplState;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enqueue {
    Accepted,
    QueueFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Success,
    NoAck,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Retry {
    Requeued(Frame),
    Lost(Frame),
}

/// Slotted-CSMA state for shared cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub exponent: u32,
    pub counter: u32,
}

impl Backoff {
    pub fn new(min_be: u32) -> Self {
        Backoff {
            exponent: min_be,
            counter: 0,
        }
    }
}

/// Updates backoff after a transmission in a shared cell.
pub fn shared_backoff_update<R: Rng>(
    backoff: &mut Backoff,
    outcome: TxOutcome,
    min_be: u32,
    max_be: u32,
    rng: &mut R,
) {
    match outcome {
        TxOutcome::Success => {
            backoff.exponent = min_be;
            backoff.counter = 0;
        }
        TxOutcome::NoAck => {
            backoff.exponent = (backoff.exponent + 1).min(max_be);
            backoff.counter = rng.random_range(0..1u32 << backoff.exponent);
        }
    }
}

/// Bumps the retry count of an unacknowledged frame, or gives up on it.
pub fn retransmit_or_drop(mut frame: Frame, max_retries: u32) -> Retry {
    if frame.retries_used < max_retries {
        frame.retries_used += 1;
        Retry::Requeued(frame)
    } else {
        Retry::Lost(frame)
    }
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub joined: bool,
    pub join_time_us: Option<u64>,
    pub time_source: Option<NodeId>,
    pub queue: VecDeque<Frame>,
    pub backoff: Backoff,
    pub radio_on_us: u64,
    pub collisions: u64,
    pub rpl: RplState,
    pub rng: ChaCha8Rng,
    pub(crate) next_app_us: Option<u64>,
    pub(crate) next_eb_us: Option<u64>,
    pub(crate) next_ka_us: Option<u64>,
}

impl NodeState {
    pub fn new(id: NodeId, min_be: u32, rng: ChaCha8Rng) -> Self {
        NodeState {
            id,
            joined: false,
            join_time_us: None,
            time_source: None,
            queue: VecDeque::new(),
            backoff: Backoff::new(min_be),
            radio_on_us: 0,
            collisions: 0,
            rpl: RplState::default(),
            rng,
            next_app_us: None,
            next_eb_us: None,
            next_ka_us: None,
        }
    }

    /// FIFO append bounded by `capacity`.
    pub fn enqueue(&mut self, frame: Frame, capacity: usize) -> Enqueue {
        if self.queue.len() >= capacity {
            return Enqueue::QueueFull;
        }
        self.queue.push_back(frame);
        Enqueue::Accepted
    }

    pub fn has_queued(&self, kind: FrameKind) -> bool {
        self.queue.iter().any(|f| f.kind == kind)
    }
}
