use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::flow::FlowSpec;
use super::receiver::Ack;
use crate::simcore::SimTime;

/// Window control constants for the simplified cubic sender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubicParams {
    pub beta: f64,
    pub c: f64,
    pub initial_window: f64,
    pub max_window: f64,
    pub dup_threshold: u32,
    pub min_rto_ms: f64,
    pub initial_rto_ms: f64,
    /// Packets leave at `pacing_gain * cwnd / srtt`, twice that in slow
    /// start. Zero sends whole windows back to back.
    pub pacing_gain: f64,
}

impl Default for CubicParams {
    fn default() -> Self {
        Self {
            beta: 0.7,
            c: 0.4,
            initial_window: 10.0,
            max_window: 1024.0,
            dup_threshold: 3,
            min_rto_ms: 1.0,
            initial_rto_ms: 200.0,
            pacing_gain: 1.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    Cubic(CubicParams),
    /// Constant bit rate: send whatever the application offers, never retransmit.
    OpenLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendItem {
    pub seq: u64,
    pub retransmit: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderStats {
    pub new_packets: u64,
    pub retransmits: u64,
    pub loss_events: u64,
    pub timeouts: u64,
    pub acks: u64,
}

#[derive(Debug, Clone, Copy)]
struct Outstanding {
    sent_at: SimTime,
    retransmitted: bool,
    lost: bool,
}

#[derive(Debug, Clone, Copy)]
struct Epoch {
    start: SimTime,
    k: f64,
    origin: f64,
}

const MAX_BACKOFF: u32 = 6;

/// Window-limited sender for one flow.
#[derive(Debug, Clone)]
pub struct Sender {
    spec: FlowSpec,
    control: Control,
    cwnd: f64,
    ssthresh: f64,
    w_max: f64,
    w_est: f64,
    epoch: Option<Epoch>,
    next_seq: u64,
    cum: u64,
    outstanding: BTreeMap<u64, Outstanding>,
    in_flight: usize,
    retx: BTreeSet<u64>,
    dupacks: u32,
    newest_delivered: Option<(SimTime, u64)>,
    recovery_until: Option<u64>,
    srtt: Option<f64>,
    rto_deadline: Option<SimTime>,
    backoff: u32,
    pace_next: SimTime,
    /// Largest in-flight count in the current and previous round trip.
    peak: [usize; 2],
    peak_since: SimTime,
    pub stats: SenderStats,
}

impl Sender {
    pub fn new(spec: FlowSpec, control: Control) -> Self {
        let (cwnd, ssthresh) = match control {
            Control::Cubic(p) => (p.initial_window.max(1.0), p.max_window),
            Control::OpenLoop => (f64::INFINITY, f64::INFINITY),
        };
        Self {
            spec,
            control,
            cwnd,
            ssthresh,
            w_max: 0.0,
            w_est: 0.0,
            epoch: None,
            next_seq: 0,
            cum: 0,
            outstanding: BTreeMap::new(),
            in_flight: 0,
            retx: BTreeSet::new(),
            dupacks: 0,
            newest_delivered: None,
            recovery_until: None,
            srtt: None,
            rto_deadline: None,
            backoff: 0,
            pace_next: SimTime::ZERO,
            peak: [0; 2],
            peak_since: SimTime::ZERO,
            stats: SenderStats::default(),
        }
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.spec
    }

    pub fn window(&self) -> f64 {
        self.cwnd
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn cum_acked(&self) -> u64 {
        self.cum
    }

    pub fn srtt(&self) -> Option<f64> {
        self.srtt
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    fn params(&self) -> Option<&CubicParams> {
        match &self.control {
            Control::Cubic(p) => Some(p),
            Control::OpenLoop => None,
        }
    }

    fn window_open(&self) -> bool {
        (self.in_flight as f64) < self.cwnd.floor().max(1.0)
    }

    /// Current retransmission timeout: twice the smoothed RTT with a floor,
    /// doubled for each consecutive timeout.
    pub fn rto(&self) -> SimTime {
        let Some(p) = self.params() else { return SimTime::MAX };
        let base = match self.srtt {
            Some(s) => (2.0 * s).max(p.min_rto_ms * 1e-3),
            None => p.initial_rto_ms * 1e-3,
        };
        SimTime::from_secs_f64(base * (1u64 << self.backoff) as f64)
    }

    /// Next packet the sender may put on the wire at `now`, if any.
    /// Retransmissions go before new data.
    pub fn next_send(&mut self, now: SimTime) -> Option<SendItem> {
        if matches!(self.control, Control::OpenLoop) {
            if self.next_seq < self.spec.packets_available(now) {
                self.next_seq += 1;
                self.stats.new_packets += 1;
                return Some(SendItem { seq: self.next_seq - 1, retransmit: false });
            }
            return None;
        }
        if !self.window_open() || now < self.pace_next {
            return None;
        }
        while let Some(seq) = self.retx.pop_first() {
            if let Some(o) = self.outstanding.get_mut(&seq) {
                *o = Outstanding { sent_at: now, retransmitted: true, lost: false };
                self.in_flight += 1;
                self.stats.retransmits += 1;
                self.arm_timer(now);
                self.after_send(now);
                return Some(SendItem { seq, retransmit: true });
            }
        }
        if self.next_seq < self.spec.packets_available(now) {
            let seq = self.next_seq;
            self.next_seq += 1;
            self.outstanding.insert(seq, Outstanding { sent_at: now, retransmitted: false, lost: false });
            self.in_flight += 1;
            self.stats.new_packets += 1;
            self.arm_timer(now);
            self.after_send(now);
            return Some(SendItem { seq, retransmit: false });
        }
        None
    }

    /// Gap between paced packets, once an RTT sample exists.
    pub fn pacing_gap(&self) -> Option<SimTime> {
        let p = self.params()?;
        let srtt = self.srtt?;
        if p.pacing_gain <= 0.0 {
            return None;
        }
        let gain = if self.cwnd < self.ssthresh { 2.0 * p.pacing_gain } else { p.pacing_gain };
        Some(SimTime::from_secs_f64(srtt / (self.cwnd * gain)))
    }

    fn after_send(&mut self, now: SimTime) {
        if let Some(gap) = self.pacing_gap() {
            self.pace_next = now + gap;
        }
        let rtt = SimTime::from_secs_f64(self.srtt.unwrap_or(0.0));
        if now.saturating_sub(self.peak_since) > rtt {
            self.peak = [0, self.peak[0]];
            self.peak_since = now;
        }
        self.peak[0] = self.peak[0].max(self.in_flight);
    }

    /// Whether the window, rather than the application, has been holding the
    /// sender back lately. Growth on acknowledgements happens only then.
    pub fn cwnd_limited(&self) -> bool {
        let peak = self.peak[0].max(self.peak[1]) as f64;
        if self.cwnd < self.ssthresh {
            self.cwnd < 2.0 * peak
        } else {
            peak >= self.cwnd.floor()
        }
    }

    /// When the sender next wants to be polled, because new application data
    /// will exist or the pacing gap will have passed. None while the window
    /// is closed, since an acknowledgement has to come first.
    pub fn next_wake(&self, now: SimTime) -> Option<SimTime> {
        if !matches!(self.control, Control::OpenLoop) && !self.window_open() {
            return None;
        }
        let has_data = !self.retx.is_empty() || self.next_seq < self.spec.packets_available(now);
        let data_at = if has_data { now } else { self.spec.time_of_packet(self.next_seq + 1) };
        let t = data_at.max(self.pace_next);
        (t > now).then_some(t)
    }

    fn arm_timer(&mut self, now: SimTime) {
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto());
        }
    }

    pub fn on_ack(&mut self, now: SimTime, ack: Ack) {
        if self.params().is_none() {
            return;
        }
        self.stats.acks += 1;
        if ack.echo >= self.cum {
            if let Some(o) = self.outstanding.remove(&ack.echo) {
                if !o.lost {
                    self.in_flight -= 1;
                }
                if !o.retransmitted {
                    self.sample_rtt(now.saturating_sub(o.sent_at).as_secs_f64());
                }
                let key = (o.sent_at, ack.echo);
                if self.newest_delivered.is_none_or(|n| key > n) {
                    self.newest_delivered = Some(key);
                }
                self.retx.remove(&ack.echo);
            }
        }
        if ack.cum > self.cum {
            let acked = ack.cum - self.cum;
            let done: Vec<u64> = self.outstanding.range(..ack.cum).map(|(&s, _)| s).collect();
            for s in done {
                if let Some(o) = self.outstanding.remove(&s) {
                    if !o.lost {
                        self.in_flight -= 1;
                    }
                }
            }
            self.retx = self.retx.split_off(&ack.cum);
            self.cum = ack.cum;
            self.dupacks = 0;
            self.backoff = 0;
            if self.recovery_until.is_some_and(|r| self.cum >= r) {
                self.recovery_until = None;
            }
            if self.recovery_until.is_none() && self.cwnd_limited() {
                self.grow(now, acked as f64);
            }
            self.rto_deadline = if self.outstanding.is_empty() { None } else { Some(now + self.rto()) };
        } else if !self.outstanding.is_empty() {
            self.dupacks += 1;
            let threshold = self.params().map_or(3, |p| p.dup_threshold);
            if self.dupacks >= threshold {
                self.detect_losses();
            }
        }
    }

    fn sample_rtt(&mut self, sample: f64) {
        self.srtt = Some(match self.srtt {
            Some(s) => 0.875 * s + 0.125 * sample,
            None => sample,
        });
    }

    /// Everything sent before the newest delivered packet and still
    /// unacknowledged is presumed lost.
    fn detect_losses(&mut self) {
        let Some(newest) = self.newest_delivered else { return };
        let mut marked = 0;
        for (&seq, o) in self.outstanding.iter_mut() {
            if !o.lost && (o.sent_at, seq) < newest {
                o.lost = true;
                self.retx.insert(seq);
                marked += 1;
            }
        }
        if marked > 0 {
            self.in_flight -= marked;
            if self.recovery_until.is_none() {
                self.on_loss_event();
                self.recovery_until = Some(self.next_seq);
            }
        }
    }

    /// Fire the retransmission timer if it is due. Returns true on timeout.
    pub fn on_timer(&mut self, now: SimTime) -> bool {
        match self.rto_deadline {
            Some(d) if d <= now => {}
            _ => return false,
        }
        if self.outstanding.is_empty() {
            self.rto_deadline = None;
            return false;
        }
        self.stats.timeouts += 1;
        for (&seq, o) in self.outstanding.iter_mut() {
            if !o.lost {
                o.lost = true;
                self.retx.insert(seq);
            }
        }
        self.in_flight = 0;
        self.dupacks = 0;
        self.on_loss_event();
        self.recovery_until = Some(self.next_seq);
        self.backoff = (self.backoff + 1).min(MAX_BACKOFF);
        self.rto_deadline = Some(now + self.rto());
        true
    }

    /// Multiplicative decrease.
    pub fn on_loss_event(&mut self) {
        let Some(&p) = self.params() else { return };
        self.stats.loss_events += 1;
        self.w_max = if self.cwnd < self.w_max { self.cwnd * (1.0 + p.beta) / 2.0 } else { self.cwnd };
        self.cwnd = (self.cwnd * p.beta).max(1.0);
        self.ssthresh = self.cwnd;
        self.epoch = None;
    }

    /// Window growth for `acked` newly acknowledged packets.
    pub fn grow(&mut self, now: SimTime, acked: f64) {
        let Some(&p) = self.params() else { return };
        if self.cwnd < self.ssthresh {
            self.cwnd = (self.cwnd + acked).min(p.max_window);
            return;
        }
        if self.epoch.is_none() {
            let k = if self.cwnd < self.w_max { ((self.w_max - self.cwnd) / p.c).cbrt() } else { 0.0 };
            self.epoch = Some(Epoch { start: now, k, origin: self.w_max.max(self.cwnd) });
            self.w_est = self.cwnd;
        }
        let epoch = self.epoch.expect("epoch set above");
        let t = (now - epoch.start).as_secs_f64() + self.srtt.unwrap_or(0.0);
        let cubic = epoch.origin + p.c * (t - epoch.k).powi(3);
        self.w_est += acked * 3.0 * (1.0 - p.beta) / (1.0 + p.beta) / self.cwnd;
        let target = cubic.max(self.w_est);
        let step = if target > self.cwnd { (target - self.cwnd) / self.cwnd } else { 0.01 / self.cwnd };
        self.cwnd = (self.cwnd + acked * step.min(0.5)).min(p.max_window);
    }
}
