use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use super::packet::{Body, GenInfo, Packet};
use super::Audit;
use crate::rlnc::{recode_random, CodedPacket, FlowId, Priority};
use crate::simcore::{BoundedQueue, EnqueueOutcome, SimTime};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApStats {
    pub received: u64,
    pub markers_in: u64,
    pub dropped_incoming: u64,
    pub evicted: u64,
    /// Packets discarded because their cohort's window closed (Giving).
    pub given_away: u64,
    pub sent_high: u64,
    pub sent_low: u64,
    pub markers_sent: u64,
    pub protocol_errors: u64,
}

#[derive(Debug, Clone)]
struct Processing {
    label: u64,
    n: u32,
    n_h: u32,
    sent: u64,
    marker_pending: bool,
}

/// Buffered label-k material grouped for recoding.
#[derive(Debug, Clone)]
struct Snapshot {
    order: Vec<usize>,
    flows: Vec<(FlowId, u32, Option<Arc<GenInfo>>)>,
}

/// Access point with a single incoming link from the gateway.
///
/// Cohort k is served from the first label-(k+1) arrival until the first
/// label-(k+2) arrival; whatever is left of it then is dropped.
#[derive(Debug)]
pub struct AccessPoint {
    branch: u8,
    buffer: BoundedQueue<Packet>,
    largest: Option<u64>,
    processing: Option<Processing>,
    snapshot: Option<Snapshot>,
    first_seen: VecDeque<(u64, SimTime)>,
    pub stats: ApStats,
}

impl AccessPoint {
    /// `branch` is 1 or 2 and tags every packet this AP recodes.
    pub fn new(branch: u8, capacity: usize) -> Self {
        Self {
            branch,
            buffer: BoundedQueue::new(capacity),
            largest: None,
            processing: None,
            snapshot: None,
            first_seen: VecDeque::new(),
            stats: ApStats::default(),
        }
    }

    pub fn branch(&self) -> u8 {
        self.branch
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn processing_label(&self) -> Option<u64> {
        self.processing.as_ref().map(|p| p.label)
    }

    /// (n, n_h) frozen when the current label was taken up.
    pub fn counts(&self) -> Option<(u32, u32)> {
        self.processing.as_ref().map(|p| (p.n, p.n_h))
    }

    fn first_seen(&self, label: u64) -> Option<SimTime> {
        self.first_seen.iter().find(|(l, _)| *l == label).map(|(_, t)| *t)
    }

    /// Returns true when the label being served changed.
    pub fn on_arrival(&mut self, pkt: Packet, now: SimTime, audit: &mut Audit) -> bool {
        let label = pkt.label;
        if self.largest.is_some_and(|l| label < l) {
            self.stats.protocol_errors += 1;
            audit.violations.label_regression += 1;
            return false;
        }
        if self.largest.is_none_or(|l| label > l) {
            self.first_seen.push_back((label, now));
            if self.first_seen.len() > 4 {
                self.first_seen.pop_front();
            }
        }
        if pkt.is_marker() {
            self.stats.markers_in += 1;
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
                EnqueueOutcome::EvictedLow(p) => {
                    self.stats.evicted += 1;
                    if self.processing_label() == Some(p.label) {
                        self.snapshot = None;
                    }
                }
            }
        }
        if self.largest.is_none_or(|l| label > l) {
            self.largest = Some(label);
            if let Some(k) = label.checked_sub(1) {
                self.take_up(k);
                return true;
            }
        }
        false
    }

    fn take_up(&mut self, k: u64) {
        let mut given = 0;
        self.buffer.drain_where(|p| p.label < k, |_| given += 1);
        self.stats.given_away += given;
        let (mut n, mut n_h) = (0, 0);
        for p in self.buffer.iter().take_while(|p| p.label == k) {
            n += 1;
            if p.priority == Priority::High {
                n_h += 1;
            }
        }
        self.processing = Some(Processing { label: k, n, n_h, sent: 0, marker_pending: n == 0 });
        self.snapshot = None;
    }

    fn snapshot(&mut self, k: u64) -> &Snapshot {
        self.snapshot.get_or_insert_with(|| {
            let mut snap = Snapshot { order: Vec::new(), flows: Vec::new() };
            for p in self.buffer.iter().take_while(|p| p.label == k) {
                let idx = match snap.flows.iter().position(|f| f.0 == p.flow) {
                    Some(i) => i,
                    None => {
                        let gen = match &p.body {
                            Body::Symbolic { gen, .. } => Some(gen.clone()),
                            _ => None,
                        };
                        snap.flows.push((p.flow, 0, gen));
                        snap.flows.len() - 1
                    }
                };
                snap.flows[idx].1 += 1;
                snap.order.push(idx);
            }
            snap
        })
    }

    pub fn has_work(&self) -> bool {
        match &self.processing {
            Some(p) => p.marker_pending || self.buffer.front().is_some_and(|f| f.label == p.label),
            None => false,
        }
    }

    /// Packet for the outgoing link at a transmit opportunity: a recoding of
    /// every buffered label-k packet of the flow at FIFO position
    /// (sent mod buffered). The first n_h are High, the rest Low.
    pub fn next_packet<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R, audit: &mut Audit) -> Option<Packet> {
        let (k, pending) = {
            let p = self.processing.as_ref()?;
            (p.label, p.marker_pending)
        };
        if pending {
            self.processing.as_mut()?.marker_pending = false;
            self.stats.markers_sent += 1;
            return Some(Packet::marker(k));
        }
        let (flow, count, gen) = {
            let sent = self.processing.as_ref()?.sent;
            let snap = self.snapshot(k);
            if snap.order.is_empty() {
                return None;
            }
            let idx = snap.order[(sent % snap.order.len() as u64) as usize];
            snap.flows[idx].clone()
        };
        let opened = self.first_seen(k + 1).is_some_and(|t| t <= now);
        let closed = self.first_seen(k + 2).is_some_and(|t| t <= now);
        if !opened || closed {
            audit.violations.giving_bound += 1;
        }
        let proc = self.processing.as_mut()?;
        let priority = if proc.sent < proc.n_h as u64 { Priority::High } else { Priority::Low };
        proc.sent += 1;
        match priority {
            Priority::High => self.stats.sent_high += 1,
            Priority::Low => self.stats.sent_low += 1,
        }
        let branch = self.branch;
        audit.row(k, flow, |r| match branch {
            1 => r.ap1_sent += 1,
            _ => r.ap2_sent += 1,
        });
        let pkt = match gen {
            Some(info) => {
                let span = count.min(info.size() as u32) as u16;
                Packet::symbolic(info, span, branch, priority)
            }
            None => {
                let inputs: Vec<&CodedPacket> = self
                    .buffer
                    .iter()
                    .take_while(|p| p.label == k)
                    .filter(|p| p.flow == flow)
                    .filter_map(|p| match &p.body {
                        Body::Exact(c) => Some(c.as_ref()),
                        _ => None,
                    })
                    .collect();
                let coded = recode_random(&inputs, rng).expect("buffered packets share one generation");
                Packet::exact(coded.with_priority(priority))
            }
        };
        Some(pkt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn info(flow: FlowId, label: u64, g: usize) -> Arc<GenInfo> {
        Arc::new(GenInfo { flow, label, seqs: (0..g as u64).collect(), max_len: 100 })
    }

    fn sym(gen: &Arc<GenInfo>, pr: Priority) -> Packet {
        Packet::symbolic(gen.clone(), gen.size() as u16, 0, pr)
    }

    #[test]
    fn first_packet_on_the_only_link_does_not_advance() {
        let mut ap = AccessPoint::new(1, 16);
        let mut audit = Audit::new(false);
        let g0 = info(0, 0, 2);
        assert!(!ap.on_arrival(sym(&g0, Priority::High), SimTime(1), &mut audit));
        assert_eq!(ap.processing_label(), None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ap.next_packet(SimTime(2), &mut rng, &mut audit).is_none());
    }

    #[test]
    fn serves_label_k_in_queue_order_and_gives_away_leftovers() {
        let mut ap = AccessPoint::new(1, 64);
        let mut audit = Audit::new(true);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = info(0, 2, 4);
        let b = info(1, 2, 2);
        for (g, pr) in [(&a, Priority::High), (&a, Priority::High), (&b, Priority::High), (&a, Priority::Low)] {
            ap.on_arrival(sym(g, pr), SimTime(10), &mut audit);
        }
        let next = info(0, 3, 1);
        assert!(ap.on_arrival(sym(&next, Priority::High), SimTime(20), &mut audit));
        assert_eq!(ap.processing_label(), Some(2));
        assert_eq!(ap.counts(), Some((4, 3)));
        let sent: Vec<(FlowId, Priority, u64)> = (0..5)
            .map(|i| {
                let p = ap.next_packet(SimTime(21 + i), &mut rng, &mut audit).unwrap();
                (p.flow, p.priority, p.label)
            })
            .collect();
        assert_eq!(
            sent,
            vec![
                (0, Priority::High, 2),
                (0, Priority::High, 2),
                (1, Priority::High, 2),
                (0, Priority::Low, 2),
                (0, Priority::Low, 2)
            ]
        );
        // First label-4 arrival: the rest of cohort 2 goes.
        let later = info(0, 4, 1);
        ap.on_arrival(sym(&later, Priority::High), SimTime(30), &mut audit);
        assert_eq!(ap.processing_label(), Some(3));
        assert_eq!(ap.stats.given_away, 4);
        assert_eq!(ap.buffered(), 2);
        assert_eq!(audit.violations.total(), 0);
    }

    #[test]
    fn advance_over_two_labels_discards_both() {
        let mut ap = AccessPoint::new(2, 64);
        let mut audit = Audit::new(false);
        for l in [2, 3] {
            ap.on_arrival(sym(&info(0, l, 1), Priority::High), SimTime(l), &mut audit);
        }
        assert_eq!(ap.processing_label(), Some(2));
        ap.on_arrival(sym(&info(0, 5, 1), Priority::High), SimTime(9), &mut audit);
        assert_eq!(ap.processing_label(), Some(4));
        assert_eq!(ap.stats.given_away, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ap.next_packet(SimTime(9), &mut rng, &mut audit).unwrap();
        assert!(m.is_marker() && m.label == 4);
    }

    #[test]
    fn label_regression_is_rejected() {
        let mut ap = AccessPoint::new(1, 4);
        let mut audit = Audit::new(false);
        ap.on_arrival(Packet::marker(5), SimTime(0), &mut audit);
        assert!(!ap.on_arrival(Packet::marker(3), SimTime(1), &mut audit));
        assert_eq!(ap.stats.protocol_errors, 1);
    }

    #[test]
    fn symbolic_span_is_capped_by_generation_size() {
        let mut ap = AccessPoint::new(1, 64);
        let mut audit = Audit::new(false);
        let g = info(0, 1, 2);
        for _ in 0..5 {
            ap.on_arrival(sym(&g, Priority::Low), SimTime(0), &mut audit);
        }
        ap.on_arrival(Packet::marker(2), SimTime(1), &mut audit);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match ap.next_packet(SimTime(1), &mut rng, &mut audit).unwrap().body {
            Body::Symbolic { span, branch, .. } => assert_eq!((span, branch), (2, 1)),
            other => panic!("{other:?}"),
        }
    }
}
