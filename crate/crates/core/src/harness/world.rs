use crate::channel::{
    calibrate_from_trace, load_trace, measure_indicator_correlation, ChannelError, ChannelProcess, TraceOptions, TraceRecord,
};
use crate::cotag::{
    AccessPoint, ApStats, Audit, Body, CohortAudit, Delivery, Device, DeviceStats, Gateway, GatewayStats, GenOutcome,
    Packet, Violations,
};
use crate::rlnc::{FlowId, Priority};
use crate::simcore::{
    BoundedQueue, EnqueueOutcome, EventKind, EventLog, Link, LinkStats, LogRecord, Phased, RngStreams, Scheduler,
    SimRng, SimTime, TxOutcome,
};
use crate::transport::{duplicate_multipath_schedule, Ack, Control, FlowSpec, Receiver, Sender};

use super::config::{ChannelKind, ConfigError, ScenarioConfig, Scheme, TransportKind};
use super::metrics::MetricsRecord;

const GATEWAY: usize = 0;
const DEVICE: usize = 3;
const NODE_NAMES: [&str; 4] = ["gateway", "ap1", "ap2", "device"];
const BURST_TARGET_BITS: f64 = 5e9;
const CORRELATION_STEPS: usize = 100_000;

#[derive(Debug)]
enum Ev {
    Bandwidth,
    Tick,
    Source { flow: FlowId, seq: u64 },
    Arrive { link: usize, pkt: Packet },
    Acks { flow: FlowId, acks: Vec<Ack> },
    Wake { flow: FlowId },
    Timer { flow: FlowId },
    Tx { link: usize },
}

impl Ev {
    fn kind(&self) -> EventKind {
        match self {
            Ev::Bandwidth => EventKind::BandwidthUpdate,
            Ev::Tick => EventKind::CohortTick,
            Ev::Source { .. } | Ev::Arrive { .. } => EventKind::PacketArrival,
            Ev::Acks { .. } | Ev::Wake { .. } | Ev::Timer { .. } => EventKind::FlowControl,
            Ev::Tx { .. } => EventKind::TransmitOpportunity,
        }
    }
}

impl Phased for Ev {
    fn phase(&self) -> u8 {
        self.kind() as u8
    }
}

/// A source packet handed to the gateway at a fixed time instead of by a sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Injection {
    pub at: SimTime,
    pub flow: FlowId,
    pub seq: u64,
}

/// Overrides used by scripted scenarios.
#[derive(Debug, Clone, Default)]
pub struct WorldOptions {
    /// Per-packet time on both gateway links, replacing the bit rate.
    pub gateway_slot: Option<SimTime>,
    /// Per-packet time on the AP1 and AP2 links.
    pub ap_slots: Option<[SimTime; 2]>,
    /// Replaces the senders: these packets reach the gateway at the given
    /// times and nothing is ever retransmitted.
    pub script: Option<Vec<Injection>>,
    /// Keep a per-transmission record and the application delivery times.
    pub record: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxRecord {
    pub start: SimTime,
    pub link: usize,
    /// None for markers.
    pub flow: Option<FlowId>,
    pub label: u64,
    pub priority: Priority,
    /// Source sequence number for uncoded packets.
    pub seq: Option<u64>,
    pub lost: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppDelivery {
    pub time: SimTime,
    pub flow: FlowId,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowSummary {
    pub injected: u64,
    pub retransmits: u64,
    pub loss_events: u64,
    pub timeouts: u64,
    pub unique_delivered: u64,
    pub duplicates: u64,
    pub in_order: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub links: [LinkStats; 4],
    pub gateway: Option<GatewayStats>,
    pub aps: [Option<ApStats>; 2],
    pub device: Option<DeviceStats>,
    pub flows: Vec<FlowSummary>,
    pub events: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: MetricsRecord,
    pub violations: Violations,
    pub stats: RunStats,
    pub event_log: Option<String>,
    pub audit: Vec<CohortAudit>,
    pub tx: Vec<TxRecord>,
    pub deliveries: Vec<AppDelivery>,
}

enum Bandwidth {
    Markov { process: ChannelProcess<SimRng>, step: SimTime },
    Trace { records: Vec<TraceRecord>, next: usize },
    Constant { rates: (f64, f64) },
}

enum GatewayNode {
    Cotag(Gateway),
    Plain { queues: [BoundedQueue<Packet>; 2], duplicate: bool, next_link: usize },
}

enum ApNode {
    Cotag(AccessPoint),
    Plain(BoundedQueue<Packet>),
}

enum DeviceNode {
    Cotag(Device),
    Plain,
}

/// Application-level bookkeeping for the throughput and transfer metrics.
struct Progress {
    burst_start: SimTime,
    burst_end: SimTime,
    first_burst_seq: Vec<u64>,
    packet_bytes: u64,
    window_bytes: u64,
    burst_bits: f64,
    reached: Option<SimTime>,
    delivered_bytes: u64,
    injected_bytes: u64,
}

impl Progress {
    fn deliver(&mut self, flow: FlowId, seqs: std::ops::Range<u64>, now: SimTime) {
        let n = seqs.end - seqs.start;
        if n == 0 {
            return;
        }
        let bytes = n * self.packet_bytes;
        self.delivered_bytes += bytes;
        if now >= self.burst_start && now < self.burst_end {
            self.window_bytes += bytes;
        }
        let first = self.first_burst_seq[flow as usize];
        let burst = seqs.end.saturating_sub(seqs.start.max(first));
        self.burst_bits += (burst * self.packet_bytes * 8) as f64;
        if self.reached.is_none() && self.burst_bits >= BURST_TARGET_BITS {
            self.reached = Some(now);
        }
    }
}

pub struct World {
    cfg: ScenarioConfig,
    end: SimTime,
    sched: Scheduler<Ev>,
    links: Vec<Link>,
    tx_pending: [bool; 4],
    arrivals_handled: [u64; 4],
    gateway: GatewayNode,
    aps: [ApNode; 2],
    device: DeviceNode,
    senders: Vec<Sender>,
    receivers: Vec<Receiver>,
    injected: Vec<u64>,
    wake_at: Vec<Option<SimTime>>,
    timer_at: Vec<Option<SimTime>>,
    stop: Option<SimTime>,
    latency: SimTime,
    ack_delay: SimTime,
    bandwidth: Bandwidth,
    per_rng: SimRng,
    coding_rng: SimRng,
    audit: Audit,
    log: EventLog,
    record: bool,
    tx: Vec<TxRecord>,
    deliveries: Vec<AppDelivery>,
    progress: Progress,
    gens_decoded: u64,
    gens_failed: u64,
    corr_measured: f64,
    p: f64,
    q: f64,
    scratch_deliveries: Vec<Delivery>,
    scratch_outcomes: Vec<GenOutcome>,
}

impl World {
    pub fn new(cfg: &ScenarioConfig, opts: WorldOptions) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let streams = RngStreams::new(cfg.seed);
        let specs: Vec<FlowSpec> = cfg.traffic.flow_specs();
        let nflows = specs.len();

        let (bandwidth, corr_measured, p, q) = match cfg.channel.kind {
            ChannelKind::Markov => {
                let params = cfg.markov_params()?;
                let corr = measure_indicator_correlation(&params, CORRELATION_STEPS, &mut streams.stream("calibration"));
                let process = ChannelProcess::stationary(params, cfg.channel.levels, streams.stream("channel"));
                (Bandwidth::Markov { process, step: params.step }, corr, params.p, params.q)
            }
            ChannelKind::Trace => {
                let path = cfg.channel.trace.as_ref().expect("validated");
                let opts = TraceOptions { duplicate_single_link: cfg.channel.single_link_trace };
                let mut records = load_trace(path, opts)?;
                if records.is_empty() {
                    return Err(ChannelError::TooShort { need: 1, got: 0 }.into());
                }
                let t0 = records[0].t_s;
                for r in &mut records {
                    r.t_s -= t0;
                }
                let (corr, p, q) = match calibrate_from_trace(&records) {
                    Ok(c) => (c.indicator_correlation, c.params.p, c.params.q),
                    Err(_) => (f64::NAN, f64::NAN, f64::NAN),
                };
                (Bandwidth::Trace { records, next: 0 }, corr, p, q)
            }
            ChannelKind::Constant => (
                Bandwidth::Constant { rates: (cfg.channel.rate1_gbps, cfg.channel.rate2_gbps) },
                f64::NAN,
                f64::NAN,
                f64::NAN,
            ),
        };

        let delay = SimTime::from_secs_f64(cfg.link_delay_us * 1e-6);
        let gw_rate = cfg.gateway_link_gbps * 1e9;
        let mut links = Vec::with_capacity(4);
        for (id, dst) in [(0, 1), (1, 2)] {
            links.push(match opts.gateway_slot {
                Some(slot) => Link::slotted(id, GATEWAY, dst, slot, delay),
                None => Link::new(id, GATEWAY, dst, gw_rate, delay, 0.0),
            });
        }
        for (i, id) in [2usize, 3].into_iter().enumerate() {
            links.push(match opts.ap_slots {
                Some(slots) => {
                    let mut l = Link::slotted(id, i + 1, DEVICE, slots[i], delay);
                    l.per = cfg.per;
                    l
                }
                None => Link::new(id, i + 1, DEVICE, 0.0, delay, cfg.per),
            });
        }

        let cap = cfg.buffer_packets;
        let (gateway, aps, device) = match cfg.scheme {
            Scheme::Cotag => (
                GatewayNode::Cotag(Gateway::new(cfg.period(), cfg.coding, 2)),
                [ApNode::Cotag(AccessPoint::new(1, cap)), ApNode::Cotag(AccessPoint::new(2, cap))],
                DeviceNode::Cotag(Device::new(2, cap)),
            ),
            Scheme::SinglePath | Scheme::Duplicate => (
                GatewayNode::Plain {
                    queues: [BoundedQueue::new(cap), BoundedQueue::new(cap)],
                    duplicate: cfg.scheme == Scheme::Duplicate,
                    next_link: 0,
                },
                [ApNode::Plain(BoundedQueue::new(cap)), ApNode::Plain(BoundedQueue::new(cap))],
                DeviceNode::Plain,
            ),
        };

        let control = match cfg.transport {
            TransportKind::Cubic => Control::Cubic(cfg.cubic),
            TransportKind::OpenLoop => Control::OpenLoop,
        };
        let scripted = opts.script.is_some();
        let senders: Vec<Sender> =
            if scripted { Vec::new() } else { specs.iter().map(|s| Sender::new(*s, control)).collect() };
        let silent = cfg.scheme == Scheme::Duplicate;
        let script_flows = opts
            .script
            .as_ref()
            .map(|s| s.iter().map(|i| i.flow as usize + 1).max().unwrap_or(0))
            .unwrap_or(0);
        let nrx = nflows.max(script_flows);

        let progress = Progress {
            burst_start: specs[0].burst_start,
            burst_end: specs[0].burst_end(),
            first_burst_seq: (0..nrx).map(|i| specs.get(i).map_or(0, |s| s.first_burst_seq())).collect(),
            packet_bytes: cfg.traffic.packet_size as u64,
            window_bytes: 0,
            burst_bits: 0.0,
            reached: None,
            delivered_bytes: 0,
            injected_bytes: 0,
        };

        let mut world = World {
            cfg: cfg.clone(),
            end: cfg.duration(),
            sched: Scheduler::new(),
            links,
            tx_pending: [false; 4],
            arrivals_handled: [0; 4],
            gateway,
            aps,
            device,
            senders,
            receivers: (0..nrx).map(|_| Receiver::new(silent)).collect(),
            injected: vec![0; nrx],
            wake_at: vec![None; nrx],
            timer_at: vec![None; nrx],
            stop: cfg.traffic.stop_s.map(SimTime::from_secs_f64),
            latency: cfg.latency(),
            ack_delay: cfg.latency() + SimTime::from_secs_f64(cfg.ack_delay_us * 1e-6),
            bandwidth,
            per_rng: streams.stream("per"),
            coding_rng: streams.stream("coding"),
            audit: Audit::new(cfg.audit),
            log: if cfg.event_log { EventLog::enabled() } else { EventLog::disabled() },
            record: opts.record,
            tx: Vec::new(),
            deliveries: Vec::new(),
            progress,
            gens_decoded: 0,
            gens_failed: 0,
            corr_measured,
            p,
            q,
            scratch_deliveries: Vec::new(),
            scratch_outcomes: Vec::new(),
        };

        world.at(SimTime::ZERO, Ev::Bandwidth);
        if cfg.scheme == Scheme::Cotag {
            world.at(cfg.period(), Ev::Tick);
        }
        match opts.script {
            Some(script) => {
                for inj in script {
                    world.injected[inj.flow as usize] += 1;
                    world.progress.injected_bytes += world.progress.packet_bytes;
                    let at = inj.at + world.latency;
                    world.at(at, Ev::Source { flow: inj.flow, seq: inj.seq });
                }
            }
            None => {
                for flow in 0..nflows as FlowId {
                    world.at(SimTime::ZERO, Ev::Wake { flow });
                }
            }
        }
        Ok(world)
    }

    fn at(&mut self, t: SimTime, ev: Ev) {
        if t > self.end {
            return;
        }
        self.sched.schedule(t, ev).expect("events are never scheduled in the past");
    }

    fn log(&mut self, t: SimTime, node: usize, kind: EventKind, pkt: Option<&Packet>, outcome: &'static str) {
        if !self.log.is_enabled() {
            return;
        }
        let (flow, cohort, priority) = match pkt {
            Some(p) if p.is_marker() => (None, Some(p.label), Some(p.priority)),
            Some(p) => (
                Some(p.flow),
                (self.cfg.scheme == Scheme::Cotag).then_some(p.label),
                Some(p.priority),
            ),
            None => (None, None, None),
        };
        self.log.record(LogRecord { time: t, node: NODE_NAMES[node], kind, flow, cohort, priority, outcome });
    }

    pub fn run(mut self) -> RunOutput {
        if self.end > SimTime::ZERO {
            while let Some((t, ev)) = self.sched.pop_until(self.end) {
                self.handle(t, ev);
            }
        }
        self.finish()
    }

    fn handle(&mut self, now: SimTime, ev: Ev) {
        match ev {
            Ev::Bandwidth => self.on_bandwidth(now),
            Ev::Tick => self.on_tick(now),
            Ev::Source { flow, seq } => self.on_source(now, flow, seq),
            Ev::Arrive { link, pkt } => self.on_link_arrival(now, link, pkt),
            Ev::Acks { flow, acks } => {
                if let Some(s) = self.senders.get_mut(flow as usize) {
                    for ack in acks {
                        s.on_ack(now, ack);
                    }
                    self.pump(now, flow);
                }
            }
            Ev::Wake { flow } => {
                let f = flow as usize;
                if self.wake_at[f] == Some(now) {
                    self.wake_at[f] = None;
                }
                self.pump(now, flow);
            }
            Ev::Timer { flow } => {
                let f = flow as usize;
                if self.timer_at[f] != Some(now) {
                    return;
                }
                self.timer_at[f] = None;
                self.senders[f].on_timer(now);
                self.pump(now, flow);
            }
            Ev::Tx { link } => {
                self.tx_pending[link] = false;
                self.links[link].release();
                self.try_send(now, link);
            }
        }
    }

    fn on_bandwidth(&mut self, now: SimTime) {
        let (rates, next) = match &mut self.bandwidth {
            Bandwidth::Markov { process, step } => {
                if now > SimTime::ZERO {
                    process.step();
                }
                (process.rates(), Some(now + *step))
            }
            Bandwidth::Trace { records, next } => {
                let r = records[*next];
                *next += 1;
                let following = records.get(*next).map(|r| SimTime::from_secs_f64(r.t_s).max(now + SimTime(1)));
                ((r.rate1_gbps, r.rate2_gbps), following)
            }
            Bandwidth::Constant { rates } => (*rates, None),
        };
        self.links[2].set_rate_bps(rates.0 * 1e9);
        self.links[3].set_rate_bps(rates.1 * 1e9);
        self.log(now, DEVICE, EventKind::BandwidthUpdate, None, "rates");
        for link in [2, 3] {
            if self.links[link].clear_stall() {
                self.kick(now, link);
            }
        }
        if let Some(t) = next {
            self.at(t, Ev::Bandwidth);
        }
    }

    fn on_tick(&mut self, now: SimTime) {
        if let GatewayNode::Cotag(gw) = &mut self.gateway {
            gw.on_tick(now, &mut self.audit);
            let next = now + gw.period();
            self.log(now, GATEWAY, EventKind::CohortTick, None, "tick");
            self.at(next, Ev::Tick);
            self.kick(now, 0);
            self.kick(now, 1);
        }
    }

    fn on_source(&mut self, now: SimTime, flow: FlowId, seq: u64) {
        let size = self.cfg.traffic.packet_size;
        match &mut self.gateway {
            GatewayNode::Cotag(gw) => {
                gw.on_arrival(flow, seq, size);
                self.log(now, GATEWAY, EventKind::PacketArrival, Some(&Packet::source(flow, seq, size)), "buffered");
            }
            GatewayNode::Plain { queues, duplicate, next_link } => {
                let pkt = Packet::source(flow, seq, size);
                let copies = if *duplicate {
                    duplicate_multipath_schedule(pkt, 2)
                } else {
                    let link = *next_link;
                    *next_link ^= 1;
                    vec![(link, pkt)]
                };
                let mut outcomes = Vec::with_capacity(copies.len());
                for (link, p) in copies {
                    let outcome = match queues[link].enqueue_with_drop(p) {
                        EnqueueOutcome::Enqueued => "enqueued",
                        EnqueueOutcome::DroppedIncoming(_) => "dropped",
                        EnqueueOutcome::EvictedLow(_) => "evicted",
                    };
                    outcomes.push((link, outcome));
                }
                for (link, outcome) in outcomes {
                    self.log(now, GATEWAY, EventKind::PacketArrival, Some(&Packet::source(flow, seq, size)), outcome);
                    self.kick(now, link);
                }
            }
        }
    }

    fn on_link_arrival(&mut self, now: SimTime, link: usize, pkt: Packet) {
        self.arrivals_handled[link] += 1;
        match link {
            0 | 1 => {
                let node = link + 1;
                let logged = self.log.is_enabled().then(|| pkt.clone());
                let outcome = match &mut self.aps[link] {
                    ApNode::Cotag(ap) => {
                        ap.on_arrival(pkt, now, &mut self.audit);
                        "received"
                    }
                    ApNode::Plain(q) => match q.enqueue_with_drop(pkt) {
                        EnqueueOutcome::Enqueued => "enqueued",
                        EnqueueOutcome::DroppedIncoming(_) => "dropped",
                        EnqueueOutcome::EvictedLow(_) => "evicted",
                    },
                };
                if let Some(p) = logged {
                    self.log(now, node, EventKind::PacketArrival, Some(&p), outcome);
                }
                self.kick(now, link + 2);
            }
            _ => {
                let branch = link - 2;
                self.log(now, DEVICE, EventKind::PacketArrival, Some(&pkt), "received");
                match &mut self.device {
                    DeviceNode::Cotag(dev) => {
                        let mut dels = std::mem::take(&mut self.scratch_deliveries);
                        let mut outs = std::mem::take(&mut self.scratch_outcomes);
                        dev.on_arrival(branch, pkt, &mut self.coding_rng, &mut self.audit, &mut dels, &mut outs);
                        for o in outs.drain(..) {
                            if o.decoded {
                                self.gens_decoded += 1;
                            } else {
                                self.gens_failed += 1;
                            }
                        }
                        let mut batch: Vec<(FlowId, Vec<Ack>)> = Vec::new();
                        for d in dels.drain(..) {
                            if let Some(ack) = self.app_deliver(now, d.flow, d.seq) {
                                match batch.iter_mut().find(|b| b.0 == d.flow) {
                                    Some(b) => b.1.push(ack),
                                    None => batch.push((d.flow, vec![ack])),
                                }
                            }
                        }
                        self.scratch_deliveries = dels;
                        self.scratch_outcomes = outs;
                        for (flow, acks) in batch {
                            self.send_acks(now, flow, acks);
                        }
                    }
                    DeviceNode::Plain => {
                        if let Body::Source { seq } = pkt.body {
                            if let Some(ack) = self.app_deliver(now, pkt.flow, seq) {
                                self.send_acks(now, pkt.flow, vec![ack]);
                            }
                        }
                    }
                }
            }
        }
    }

    fn send_acks(&mut self, now: SimTime, flow: FlowId, acks: Vec<Ack>) {
        if (flow as usize) < self.senders.len() {
            self.at(now + self.ack_delay, Ev::Acks { flow, acks });
        }
    }

    fn app_deliver(&mut self, now: SimTime, flow: FlowId, seq: u64) -> Option<Ack> {
        let rx = &mut self.receivers[flow as usize];
        let dups = rx.stats.duplicates;
        let got = rx.on_packet(seq);
        let fresh = rx.stats.duplicates == dups;
        match self.cfg.transport {
            TransportKind::Cubic => self.progress.deliver(flow, got.released.clone(), now),
            TransportKind::OpenLoop if fresh => self.progress.deliver(flow, seq..seq + 1, now),
            TransportKind::OpenLoop => {}
        }
        if self.record && fresh {
            self.deliveries.push(AppDelivery { time: now, flow, seq });
        }
        got.ack
    }

    fn pump(&mut self, now: SimTime, flow: FlowId) {
        if self.stop.is_some_and(|s| now >= s) {
            return;
        }
        let f = flow as usize;
        let bytes = self.cfg.traffic.packet_size as u64;
        while let Some(item) = self.senders[f].next_send(now) {
            if !item.retransmit {
                self.injected[f] += 1;
                self.progress.injected_bytes += bytes;
            }
            let at = now + self.latency;
            self.at(at, Ev::Source { flow, seq: item.seq });
        }
        if let Some(w) = self.senders[f].next_wake(now) {
            let w = w.max(now);
            if self.wake_at[f].is_none_or(|x| w < x || x < now) {
                self.wake_at[f] = Some(w);
                self.at(w, Ev::Wake { flow });
            }
        }
        if let Some(d) = self.senders[f].rto_deadline() {
            let d = d.max(now);
            if self.timer_at[f].is_none_or(|x| d < x) {
                self.timer_at[f] = Some(d);
                self.at(d, Ev::Timer { flow });
            }
        }
    }

    fn kick(&mut self, now: SimTime, link: usize) {
        if !self.tx_pending[link] && !self.links[link].is_busy() {
            self.tx_pending[link] = true;
            self.at(now, Ev::Tx { link });
        }
    }

    fn pull(&mut self, now: SimTime, link: usize) -> Option<Packet> {
        match link {
            0 | 1 => match &mut self.gateway {
                GatewayNode::Cotag(gw) => gw.next_packet(link, &mut self.coding_rng, &mut self.audit),
                GatewayNode::Plain { queues, .. } => queues[link].pop_front(),
            },
            _ => match &mut self.aps[link - 2] {
                ApNode::Cotag(ap) => ap.next_packet(now, &mut self.coding_rng, &mut self.audit),
                ApNode::Plain(q) => q.pop_front(),
            },
        }
    }

    fn has_work(&self, link: usize) -> bool {
        match link {
            0 | 1 => match &self.gateway {
                GatewayNode::Cotag(gw) => gw.has_work(link),
                GatewayNode::Plain { queues, .. } => !queues[link].is_empty(),
            },
            _ => match &self.aps[link - 2] {
                ApNode::Cotag(ap) => ap.has_work(),
                ApNode::Plain(q) => !q.is_empty(),
            },
        }
    }

    fn try_send(&mut self, now: SimTime, link: usize) {
        if !self.has_work(link) {
            return;
        }
        if self.links[link].serialization(1).is_none() {
            // Marks the link stalled without consuming a packet.
            let _ = self.links[link].transmit(0, now, &mut self.per_rng);
            return;
        }
        let Some(pkt) = self.pull(now, link) else { return };
        let node = self.links[link].src;
        let outcome = self.links[link].transmit(pkt.size, now, &mut self.per_rng);
        let done = match outcome {
            TxOutcome::Delivered { arrival, done } => {
                if self.record {
                    self.push_tx(now, link, &pkt, false);
                }
                self.log(now, node, EventKind::TransmitOpportunity, Some(&pkt), "sent");
                self.at(arrival, Ev::Arrive { link, pkt });
                done
            }
            TxOutcome::Dropped { done } => {
                if self.record {
                    self.push_tx(now, link, &pkt, true);
                }
                self.log(now, node, EventKind::TransmitOpportunity, Some(&pkt), "lost");
                done
            }
            TxOutcome::Stalled => unreachable!("bandwidth checked above"),
        };
        self.tx_pending[link] = true;
        self.at(done, Ev::Tx { link });
    }

    fn push_tx(&mut self, now: SimTime, link: usize, pkt: &Packet, lost: bool) {
        let seq = match pkt.body {
            Body::Source { seq } => Some(seq),
            _ => None,
        };
        self.tx.push(TxRecord {
            start: now,
            link,
            flow: (!pkt.is_marker()).then_some(pkt.flow),
            label: pkt.label,
            priority: pkt.priority,
            seq,
            lost,
        });
    }

    /// Packet and byte balances over every buffer and link.
    fn conservation_failures(&self) -> u64 {
        let mut bad = 0u64;
        let mut check = |ok: bool| {
            if !ok {
                bad += 1;
            }
        };
        for (l, link) in self.links.iter().enumerate() {
            let s = &link.stats;
            check(s.sent == s.dropped_per + s.arrived);
            check(self.arrivals_handled[l] <= s.arrived);
        }
        match &self.gateway {
            GatewayNode::Cotag(gw) => {
                let g = &gw.stats;
                check(g.high_sent + g.low_sent + g.markers_sent == self.links[0].stats.sent + self.links[1].stats.sent);
            }
            GatewayNode::Plain { queues, .. } => {
                for (l, q) in queues.iter().enumerate() {
                    let s = &q.stats;
                    check(s.offered == s.enqueued + s.dropped_incoming);
                    check(s.enqueued == self.links[l].stats.sent + s.evicted + q.len() as u64);
                }
            }
        }
        for (i, ap) in self.aps.iter().enumerate() {
            match ap {
                ApNode::Cotag(ap) => {
                    let s = &ap.stats;
                    check(s.received == s.dropped_incoming + s.evicted + s.given_away + ap.buffered() as u64);
                    check(
                        s.sent_high + s.sent_low + s.markers_sent == self.links[i + 2].stats.sent,
                    );
                }
                ApNode::Plain(q) => {
                    let s = &q.stats;
                    check(s.offered == s.enqueued + s.dropped_incoming);
                    check(s.enqueued == self.links[i + 2].stats.sent + s.evicted + q.len() as u64);
                }
            }
        }
        if let DeviceNode::Cotag(dev) = &self.device {
            let s = &dev.stats;
            check(s.received == s.dropped_incoming + s.evicted + s.consumed + dev.buffered() as u64);
        }
        for (f, rx) in self.receivers.iter().enumerate() {
            check(rx.stats.packets - rx.stats.duplicates <= self.injected[f]);
            check(rx.expected() <= self.injected[f]);
        }
        check(self.progress.delivered_bytes <= self.progress.injected_bytes);
        bad
    }

    fn finish(mut self) -> RunOutput {
        let conservation = self.conservation_failures();
        self.audit.violations.conservation += conservation;
        let over = self.audit.records().iter().filter(|r| r.high_sent > r.n_k).count() as u64;
        self.audit.violations.high_over_n += over;

        let cfg = &self.cfg;
        let p = &self.progress;
        let window = (p.burst_end.min(self.end).saturating_sub(p.burst_start)).as_secs_f64();
        let throughput = if window > 0.0 { p.window_bytes as f64 * 8.0 / window / 1e9 } else { 0.0 };
        let latency = match p.reached {
            Some(t) => t.saturating_sub(p.burst_start).as_secs_f64(),
            None => f64::INFINITY,
        };
        let decode_ratio = match cfg.scheme {
            Scheme::Cotag if self.gens_decoded + self.gens_failed > 0 => {
                self.gens_decoded as f64 / (self.gens_decoded + self.gens_failed) as f64
            }
            _ => f64::NAN,
        };
        let record = MetricsRecord {
            scenario: cfg.scenario.clone(),
            scheme: cfg.scheme,
            per: cfg.per,
            latency_ms: cfg.latency_ms,
            corr_target: cfg.corr_target.unwrap_or(f64::NAN),
            corr_measured: self.corr_measured,
            p: self.p,
            q: self.q,
            t_ms: cfg.t_ms,
            seed: cfg.seed,
            throughput_gbps: throughput,
            latency_5gb_s: latency,
            decode_ratio,
            injected_bytes: p.injected_bytes,
            delivered_bytes: p.delivered_bytes,
        };

        let flows = self
            .receivers
            .iter()
            .enumerate()
            .map(|(f, rx)| {
                let s = self.senders.get(f).map(|s| s.stats).unwrap_or_default();
                FlowSummary {
                    injected: self.injected[f],
                    retransmits: s.retransmits,
                    loss_events: s.loss_events,
                    timeouts: s.timeouts,
                    unique_delivered: rx.stats.packets - rx.stats.duplicates,
                    duplicates: rx.stats.duplicates,
                    in_order: rx.stats.in_order,
                }
            })
            .collect();
        let stats = RunStats {
            links: [self.links[0].stats, self.links[1].stats, self.links[2].stats, self.links[3].stats],
            gateway: match &self.gateway {
                GatewayNode::Cotag(gw) => Some(gw.stats),
                GatewayNode::Plain { .. } => None,
            },
            aps: [0, 1].map(|i| match &self.aps[i] {
                ApNode::Cotag(ap) => Some(ap.stats),
                ApNode::Plain(_) => None,
            }),
            device: match &self.device {
                DeviceNode::Cotag(d) => Some(d.stats),
                DeviceNode::Plain => None,
            },
            flows,
            events: self.sched.dispatched(),
        };
        RunOutput {
            record,
            violations: self.audit.violations,
            stats,
            event_log: self.log.is_enabled().then(|| self.log.into_string()),
            audit: self.audit.records(),
            tx: self.tx,
            deliveries: self.deliveries,
        }
    }
}

/// Build and run one scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    Ok(World::new(cfg, WorldOptions::default())?.run())
}
