use std::sync::Arc;

use rand::Rng;

use super::packet::{source_payload, GenInfo, Packet};
use super::{Audit, CodingMode};
use crate::rlnc::{encode_random, FlowId, Generation, Priority};
use crate::simcore::SimTime;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatewayStats {
    pub sources: u64,
    pub cohorts: u64,
    pub high_sent: u64,
    pub low_sent: u64,
    pub markers_sent: u64,
    /// Cohorts retired before every source packet went out once as High.
    pub cohorts_cut_short: u64,
}

#[derive(Debug)]
struct Pending {
    flow: FlowId,
    seq: u64,
    len: u32,
    payload: Option<Vec<u8>>,
}

#[derive(Debug)]
enum GenData {
    Exact(Generation),
    Symbolic(Arc<GenInfo>),
}

#[derive(Debug)]
struct Cohort {
    label: u64,
    /// Generation index of each source packet, in arrival order.
    order: Vec<usize>,
    flows: Vec<FlowId>,
    gens: Vec<GenData>,
    sent: u64,
}

impl Cohort {
    fn n(&self) -> u64 {
        self.order.len() as u64
    }
}

/// Gateway side: holds arrivals for one interval, then spends the next
/// interval emitting coded packets for them, High first and Low after.
#[derive(Debug)]
pub struct Gateway {
    period: SimTime,
    mode: CodingMode,
    arriving: Vec<Pending>,
    cohort: Option<Cohort>,
    markers: Vec<bool>,
    pub stats: GatewayStats,
}

impl Gateway {
    pub fn new(period: SimTime, mode: CodingMode, links: usize) -> Self {
        assert!(period > SimTime::ZERO, "cohort interval must be positive");
        Self {
            period,
            mode,
            arriving: Vec::new(),
            cohort: None,
            markers: vec![false; links],
            stats: GatewayStats::default(),
        }
    }

    pub fn period(&self) -> SimTime {
        self.period
    }

    /// Index of the half-open interval [iT, (i+1)T) containing `t`. Packets
    /// arriving in interval i go out labelled i + 1.
    pub fn interval_of(&self, t: SimTime) -> u64 {
        t.as_nanos() / self.period.as_nanos()
    }

    pub fn buffered(&self) -> usize {
        self.arriving.len()
    }

    pub fn current_label(&self) -> Option<u64> {
        self.cohort.as_ref().map(|c| c.label)
    }

    /// Source count of the cohort being emitted.
    pub fn n_k(&self) -> u64 {
        self.cohort.as_ref().map_or(0, Cohort::n)
    }

    pub fn on_arrival(&mut self, flow: FlowId, seq: u64, len: u32) {
        let payload = match self.mode {
            CodingMode::Exact => Some(source_payload(flow, seq, len as usize)),
            CodingMode::Symbolic => None,
        };
        self.stats.sources += 1;
        self.arriving.push(Pending { flow, seq, len, payload });
    }

    /// Interval boundary at `now = kT`: the previous cohort is retired and the
    /// arrivals of [(k-1)T, kT) become cohort k. Returns (k, n_k).
    pub fn on_tick(&mut self, now: SimTime, audit: &mut Audit) -> (u64, u64) {
        let label = self.interval_of(now);
        if let Some(old) = &self.cohort {
            if old.sent < old.n() {
                self.stats.cohorts_cut_short += 1;
            }
        }
        let arrivals = std::mem::take(&mut self.arriving);
        let mut flows: Vec<FlowId> = Vec::new();
        let mut members: Vec<Vec<Pending>> = Vec::new();
        let mut order = Vec::with_capacity(arrivals.len());
        for p in arrivals {
            let idx = match flows.iter().position(|&f| f == p.flow) {
                Some(i) => i,
                None => {
                    flows.push(p.flow);
                    members.push(Vec::new());
                    flows.len() - 1
                }
            };
            order.push(idx);
            members[idx].push(p);
        }
        let gens = flows
            .iter()
            .zip(members)
            .map(|(&flow, ps)| {
                audit.row(label, flow, |r| r.n_k = ps.len() as u32);
                match self.mode {
                    CodingMode::Exact => {
                        let payloads: Vec<Vec<u8>> = ps.into_iter().map(|p| p.payload.unwrap_or_default()).collect();
                        GenData::Exact(Generation::new(flow, label, &payloads).expect("non-empty generation"))
                    }
                    CodingMode::Symbolic => {
                        let max_len = ps.iter().map(|p| p.len).max().unwrap_or(0);
                        let seqs = ps.iter().map(|p| p.seq).collect();
                        GenData::Symbolic(Arc::new(GenInfo { flow, label, seqs, max_len }))
                    }
                }
            })
            .collect();
        let n = order.len() as u64;
        self.cohort = Some(Cohort { label, order, flows, gens, sent: 0 });
        self.stats.cohorts += 1;
        if n == 0 {
            self.markers.iter_mut().for_each(|m| *m = true);
        }
        (label, n)
    }

    pub fn has_work(&self, link: usize) -> bool {
        self.markers[link] || self.n_k() > 0
    }

    /// Packet for `link` at a transmit opportunity. The source position is
    /// (packets sent so far) mod n_k in arrival order, so the first n_k
    /// emissions visit every source packet's flow once in queue order.
    pub fn next_packet<R: Rng + ?Sized>(&mut self, link: usize, rng: &mut R, audit: &mut Audit) -> Option<Packet> {
        let cohort = self.cohort.as_mut()?;
        if self.markers[link] {
            self.markers[link] = false;
            self.stats.markers_sent += 1;
            return Some(Packet::marker(cohort.label));
        }
        let n = cohort.n();
        if n == 0 {
            return None;
        }
        let gi = cohort.order[(cohort.sent % n) as usize];
        let priority = if cohort.sent < n { Priority::High } else { Priority::Low };
        cohort.sent += 1;
        let flow = cohort.flows[gi];
        match priority {
            Priority::High => {
                self.stats.high_sent += 1;
                audit.row(cohort.label, flow, |r| r.high_sent += 1);
            }
            Priority::Low => {
                self.stats.low_sent += 1;
                audit.row(cohort.label, flow, |r| r.low_sent += 1);
            }
        }
        Some(match &cohort.gens[gi] {
            GenData::Exact(gen) => Packet::exact(encode_random(gen, rng).with_priority(priority)),
            GenData::Symbolic(info) => Packet::symbolic(info.clone(), info.size() as u16, 0, priority),
        })
    }
}
