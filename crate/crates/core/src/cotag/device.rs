use std::collections::BTreeMap;

use rand::Rng;

use super::gate::LabelGate;
use super::packet::{payload_seq, source_payload, Body, Packet};
use super::Audit;
use crate::rlnc::{Decoder, FlowId, Priority};
use crate::simcore::{BoundedQueue, EnqueueOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeviceStats {
    pub received: u64,
    pub markers_in: u64,
    pub dropped_incoming: u64,
    pub evicted: u64,
    pub late: u64,
    /// Buffered coded packets handed to the decoder.
    pub consumed: u64,
    pub gens_decoded: u64,
    pub gens_failed: u64,
    pub packets_delivered: u64,
    pub packets_lost: u64,
    pub protocol_errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub flow: FlowId,
    pub seq: u64,
    pub label: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenOutcome {
    pub flow: FlowId,
    pub label: u64,
    pub size: u32,
    pub decoded: bool,
}

/// Mobile device: buffers coded packets from every AP and decodes cohort k
/// once each incoming link has carried a label above k.
#[derive(Debug)]
pub struct Device {
    gate: LabelGate,
    buffer: BoundedQueue<Packet>,
    processed: Option<u64>,
    last_label: BTreeMap<FlowId, u64>,
    pub stats: DeviceStats,
}

impl Device {
    pub fn new(links: usize, capacity: usize) -> Self {
        Self {
            gate: LabelGate::new(links),
            buffer: BoundedQueue::new(capacity),
            processed: None,
            last_label: BTreeMap::new(),
            stats: DeviceStats::default(),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn processed_through(&self) -> Option<u64> {
        self.processed
    }

    /// Handle a packet from incoming link `link`. Decoded packets are appended
    /// to `delivered` in source order; every generation tried is reported in
    /// `outcomes`.
    pub fn on_arrival<R: Rng + ?Sized>(
        &mut self,
        link: usize,
        pkt: Packet,
        rng: &mut R,
        audit: &mut Audit,
        delivered: &mut Vec<Delivery>,
        outcomes: &mut Vec<GenOutcome>,
    ) {
        if !self.gate.observe(link, pkt.label) {
            self.stats.protocol_errors += 1;
            audit.violations.label_regression += 1;
            return;
        }
        if pkt.is_marker() {
            self.stats.markers_in += 1;
        } else if self.processed.is_some_and(|p| pkt.label <= p) {
            self.stats.late += 1;
        } else {
            self.stats.received += 1;
            let had_low = self.buffer.low_count() > 0;
            match self.buffer.enqueue_with_drop(pkt) {
                EnqueueOutcome::Enqueued => {}
                EnqueueOutcome::DroppedIncoming(p) => {
                    self.stats.dropped_incoming += 1;
                    if p.priority == Priority::High && had_low {
                        audit.violations.high_dropped_with_low += 1;
                    }
                }
                EnqueueOutcome::EvictedLow(_) => self.stats.evicted += 1,
            }
        }
        let Some(limit) = self.gate.limit() else { return };
        if self.processed.is_some_and(|p| p >= limit) {
            return;
        }
        // Packets from the two links interleave, so labels are not sorted
        // within the buffer.
        while let Some(label) = self.buffer.iter().map(|p| p.label).filter(|&l| l <= limit).min() {
            self.process(label, rng, audit, delivered, outcomes);
        }
        self.processed = Some(limit);
    }

    fn process<R: Rng + ?Sized>(
        &mut self,
        label: u64,
        rng: &mut R,
        audit: &mut Audit,
        delivered: &mut Vec<Delivery>,
        outcomes: &mut Vec<GenOutcome>,
    ) {
        let mut groups: Vec<(FlowId, Vec<Packet>)> = Vec::new();
        let mut taken = Vec::new();
        self.buffer.drain_where(|p| p.label == label, |p| taken.push(p));
        for p in taken {
            self.stats.consumed += 1;
            match groups.iter_mut().find(|g| g.0 == p.flow) {
                Some(g) => g.1.push(p),
                None => groups.push((p.flow, vec![p])),
            }
        }
        for (flow, pkts) in groups {
            let (size, seqs) = match decode_group(&pkts, rng, audit) {
                Ok(v) => (v.len() as u32, Some(v)),
                Err(size) => (size, None),
            };
            let decoded = seqs.is_some();
            outcomes.push(GenOutcome { flow, label, size, decoded });
            if let Some(seqs) = seqs {
                if self.last_label.get(&flow).is_some_and(|&l| l > label) {
                    audit.violations.stale_delivery += 1;
                }
                self.last_label.insert(flow, label);
                self.stats.gens_decoded += 1;
                self.stats.packets_delivered += seqs.len() as u64;
                delivered.extend(seqs.iter().map(|&seq| Delivery { flow, seq, label }));
            } else {
                self.stats.gens_failed += 1;
                self.stats.packets_lost += size as u64;
            }
            audit.row(label, flow, |r| {
                r.decoded = decoded;
                if decoded {
                    r.delivered += size;
                }
            });
        }
    }
}

/// Decode one generation. Returns the source sequence numbers in order, or
/// the generation size on failure.
fn decode_group<R: Rng + ?Sized>(pkts: &[Packet], rng: &mut R, audit: &mut Audit) -> Result<Vec<u64>, u32> {
    match &pkts[0].body {
        Body::Symbolic { gen, .. } => {
            let g = gen.size();
            let mut eff = [0usize; 256];
            let mut rank = 0usize;
            for p in pkts {
                let Body::Symbolic { span, branch, .. } = &p.body else { continue };
                let b = *branch as usize;
                let deficit = (*span as usize).saturating_sub(eff[b]).min(g - rank);
                if deficit == 0 {
                    continue;
                }
                // A uniformly random vector of a d-dimensional space lands in a
                // fixed (d - deficit)-dimensional subspace with probability
                // 256^-deficit.
                let innovative = deficit >= 4 || rng.random::<f64>() >= 256f64.powi(-(deficit as i32));
                if innovative {
                    eff[b] += 1;
                    rank += 1;
                }
            }
            if rank == g {
                Ok(gen.seqs.clone())
            } else {
                Err(g as u32)
            }
        }
        Body::Exact(first) => {
            let g = first.generation_size();
            let mut dec = Decoder::new(first.flow_id, first.cohort_label, g);
            for p in pkts {
                if let Body::Exact(c) = &p.body {
                    let _ = dec.insert(c);
                }
            }
            let payloads = dec.extract().map_err(|_| g as u32)?;
            let mut seqs = Vec::with_capacity(g);
            for payload in payloads {
                let seq = payload_seq(&payload).unwrap_or(u64::MAX);
                if payload != source_payload(first.flow_id, seq, payload.len()) {
                    audit.violations.payload_mismatch += 1;
                }
                seqs.push(seq);
            }
            Ok(seqs)
        }
        Body::Source { .. } | Body::Marker => Err(0),
    }
}
