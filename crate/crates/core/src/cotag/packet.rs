use std::sync::Arc;

use crate::rlnc::{CodedPacket, FlowId, Priority, HEADER_FIXED_LEN};
use crate::simcore::Tagged;

/// Wire size of a label-only marker.
pub const MARKER_BYTES: u32 = 64;

/// Length-prefix bytes added to every coded block.
const BLOCK_PREFIX: u32 = 4;

/// Flow id carried by markers, which belong to no flow.
pub const NO_FLOW: FlowId = FlowId::MAX;

/// Source metadata of one generation, shared by every symbolic coded packet
/// drawn from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenInfo {
    pub flow: FlowId,
    pub label: u64,
    pub seqs: Vec<u64>,
    pub max_len: u32,
}

impl GenInfo {
    pub fn size(&self) -> usize {
        self.seqs.len()
    }

    pub fn coded_wire_len(&self) -> u32 {
        HEADER_FIXED_LEN as u32 + self.seqs.len() as u32 + BLOCK_PREFIX + self.max_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    /// Uncoded source packet, used by the baselines.
    Source { seq: u64 },
    /// Carries a label and nothing else; keeps label gates moving when a
    /// cohort has no coded material.
    Marker,
    /// Real GF(2^8) coded packet.
    Exact(Box<CodedPacket>),
    /// Coded packet tracked by rank bookkeeping only. `span` is the dimension
    /// of the subspace it was drawn from and `branch` names the node that drew
    /// it (0 for the gateway, i for AP i).
    Symbolic { gen: Arc<GenInfo>, span: u16, branch: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub flow: FlowId,
    pub label: u64,
    pub priority: Priority,
    pub size: u32,
    pub body: Body,
}

impl Packet {
    pub fn source(flow: FlowId, seq: u64, size: u32) -> Self {
        Self { flow, label: 0, priority: Priority::High, size, body: Body::Source { seq } }
    }

    pub fn marker(label: u64) -> Self {
        Self { flow: NO_FLOW, label, priority: Priority::High, size: MARKER_BYTES, body: Body::Marker }
    }

    pub fn exact(pkt: CodedPacket) -> Self {
        Self {
            flow: pkt.flow_id,
            label: pkt.cohort_label,
            priority: pkt.priority,
            size: pkt.wire_len() as u32,
            body: Body::Exact(Box::new(pkt)),
        }
    }

    pub fn symbolic(gen: Arc<GenInfo>, span: u16, branch: u8, priority: Priority) -> Self {
        Self {
            flow: gen.flow,
            label: gen.label,
            priority,
            size: gen.coded_wire_len(),
            body: Body::Symbolic { gen, span, branch },
        }
    }

    pub fn is_marker(&self) -> bool {
        matches!(self.body, Body::Marker)
    }

    pub fn kind(&self) -> &'static str {
        match self.body {
            Body::Source { .. } => "source",
            Body::Marker => "marker",
            Body::Exact(_) | Body::Symbolic { .. } => "coded",
        }
    }
}

impl Tagged for Packet {
    fn priority(&self) -> Priority {
        self.priority
    }
}

/// Deterministic content for source packet `seq` of `flow`: the sequence
/// number in the first eight bytes (little-endian), then filler derived from
/// (flow, seq). Lets the receiving end check payloads byte for byte.
pub fn source_payload(flow: FlowId, seq: u64, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len.max(8));
    out.extend_from_slice(&seq.to_le_bytes());
    let mut x = ((flow as u64) << 40) ^ seq.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    while out.len() < len {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.truncate(len.max(8));
    out
}

/// Sequence number stored at the front of a source payload.
pub fn payload_seq(payload: &[u8]) -> Option<u64> {
    let head: [u8; 8] = payload.get(..8)?.try_into().ok()?;
    Some(u64::from_le_bytes(head))
}
