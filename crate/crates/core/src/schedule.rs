//! Cell schedules: Orchestra (autonomous, receiver-based) and the
//! single-shared-cell 6TiSCH minimal schedule.
//!
//! Both are pure functions of node id, ASN and a little routing/queue state.
//! Candidate cells come back in precedence order; the engine acts on the
//! first one.

use crate::config::{MinimalConfig, OrchestraConfig};
use crate::topology::NodeId;

pub const EB_HANDLE: u8 = 0;
pub const COMMON_HANDLE: u8 = 1;
pub const UNICAST_HANDLE: u8 = 2;

pub const EB_CHANNEL_OFFSET: u32 = 0;
pub const COMMON_CHANNEL_OFFSET: u32 = 1;
pub const UNICAST_CHANNEL_OFFSET: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKind {
    /// Transmit toward `peer`; no contention backoff.
    TxUnicast,
    Rx,
    /// Shared TX/RX cell with slotted-CSMA backoff.
    Shared,
    EbTx,
    /// Listen for the time source's EB.
    EbRx,
}

impl CellKind {
    fn is_tx(self) -> bool {
        matches!(self, CellKind::TxUnicast | CellKind::EbTx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub slotframe_handle: u8,
    pub slotframe_len: u32,
    pub slot_offset: u32,
    pub channel_offset: u32,
    pub kind: CellKind,
    pub peer: Option<NodeId>,
}

impl Cell {
    fn precedence(&self) -> (u8, bool, Option<NodeId>) {
        (self.slotframe_handle, !self.kind.is_tx(), self.peer)
    }
}

/// TSCH channel hopping: `sequence[(asn + channel_offset) % len]`.
pub fn hop_channel(asn: u64, channel_offset: u32, sequence: &[u8]) -> u8 {
    let len = sequence.len() as u64;
    sequence[((asn % len + u64::from(channel_offset) % len) % len) as usize]
}

/// Orchestra's slot for node `x` in a slotframe of `len` slots. Node ids are
/// used directly in place of an address hash.
#[inline]
pub fn orchestra_hash(x: NodeId, len: u32) -> u32 {
    u32::from(x.0) % len
}

/// What Orchestra needs to know about a node besides its id.
#[derive(Debug, Clone, Copy, Default)]
pub struct OrchestraState<'a> {
    pub time_source: Option<NodeId>,
    pub eb_pending: bool,
    /// Next hops of queued unicast data frames.
    pub unicast_next_hops: &'a [NodeId],
}

/// Candidate Orchestra cells for `node` at `asn`, written into `out` in
/// precedence order (lower slotframe handle first, TX before RX).
pub fn orchestra_cells_into(
    node: NodeId,
    asn: u64,
    cfg: &OrchestraConfig,
    state: &OrchestraState<'_>,
    out: &mut Vec<Cell>,
) {
    out.clear();
    let eb_slot = (asn % u64::from(cfg.eb_sf_len)) as u32;
    let eb_cell = |kind, peer| Cell {
        slotframe_handle: EB_HANDLE,
        slotframe_len: cfg.eb_sf_len,
        slot_offset: eb_slot,
        channel_offset: EB_CHANNEL_OFFSET,
        kind,
        peer,
    };
    if state.eb_pending && orchestra_hash(node, cfg.eb_sf_len) == eb_slot {
        out.push(eb_cell(CellKind::EbTx, None));
    }
    if let Some(ts) = state.time_source {
        if orchestra_hash(ts, cfg.eb_sf_len) == eb_slot {
            out.push(eb_cell(CellKind::EbRx, Some(ts)));
        }
    }

    if asn.is_multiple_of(u64::from(cfg.common_sf_len)) {
        out.push(Cell {
            slotframe_handle: COMMON_HANDLE,
            slotframe_len: cfg.common_sf_len,
            slot_offset: 0,
            channel_offset: COMMON_CHANNEL_OFFSET,
            kind: CellKind::Shared,
            peer: None,
        });
    }

    let uc_slot = (asn % u64::from(cfg.unicast_sf_len)) as u32;
    let uc_cell = |kind, peer| Cell {
        slotframe_handle: UNICAST_HANDLE,
        slotframe_len: cfg.unicast_sf_len,
        slot_offset: uc_slot,
        channel_offset: UNICAST_CHANNEL_OFFSET,
        kind,
        peer,
    };
    let first_uc = out.len();
    for &m in state.unicast_next_hops {
        if orchestra_hash(m, cfg.unicast_sf_len) == uc_slot
            && !out[first_uc..].iter().any(|c| c.peer == Some(m))
        {
            out.push(uc_cell(CellKind::TxUnicast, Some(m)));
        }
    }
    if orchestra_hash(node, cfg.unicast_sf_len) == uc_slot {
        out.push(uc_cell(CellKind::Rx, None));
    }
    out.sort_by_key(Cell::precedence);
}

pub fn orchestra_cells(
    node: NodeId,
    asn: u64,
    cfg: &OrchestraConfig,
    state: &OrchestraState<'_>,
) -> Vec<Cell> {
    let mut out = Vec::new();
    orchestra_cells_into(node, asn, cfg, state, &mut out);
    out
}

/// The single shared cell, when `asn` falls on it.
pub fn minimal_cells(_node: NodeId, asn: u64, cfg: &MinimalConfig) -> Option<Cell> {
    let slot = (asn % u64::from(cfg.slotframe_len)) as u32;
    (slot == cfg.shared_slot_offset).then_some(Cell {
        slotframe_handle: 0,
        slotframe_len: cfg.slotframe_len,
        slot_offset: slot,
        channel_offset: cfg.shared_channel_offset,
        kind: CellKind::Shared,
        peer: None,
    })
}

/// Precedence arbitration over a candidate list.
pub fn select_active(cells: &[Cell]) -> Option<Cell> {
    cells.iter().min_by_key(|c| c.precedence()).copied()
}
