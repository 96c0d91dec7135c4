use serde::Serialize;

use crate::rpl::RouteHeader;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Data,
    Eb,
    Dio,
    /// Keep-alive to the time source; only when enabled.
    Ka,
}

impl FrameKind {
    pub fn is_broadcast(self) -> bool {
        matches!(self, FrameKind::Eb | FrameKind::Dio)
    }
}

/// Ids of control frames live above this bit; data frame ids index the
/// run's packet ledger.
pub const CONTROL_ID_BASE: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_id: u64,
    pub kind: FrameKind,
    pub source: NodeId,
    /// `None` for broadcast frames.
    pub next_hop: Option<NodeId>,
    pub payload_bytes: u32,
    pub generated_at_us: u64,
    pub retries_used: u32,
    /// Rank advertised by EBs and DIOs.
    pub sender_rank: u16,
    /// Links crossed so far (data frames).
    pub hops: u32,
    pub route: RouteHeader,
}

impl Frame {
    pub fn final_destination(&self) -> Option<NodeId> {
        match self.kind {
            FrameKind::Data => Some(self.route.destination),
            FrameKind::Ka => self.next_hop,
            FrameKind::Eb | FrameKind::Dio => None,
        }
    }

    pub(crate) fn broadcast(
        frame_id: u64,
        kind: FrameKind,
        source: NodeId,
        payload_bytes: u32,
        now: u64,
        rank: u16,
    ) -> Frame {
        Frame {
            frame_id,
            kind,
            source,
            next_hop: None,
            payload_bytes,
            generated_at_us: now,
            retries_used: 0,
            sender_rank: rank,
            hops: 0,
            route: RouteHeader::default(),
        }
    }
}
