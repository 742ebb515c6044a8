use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rlnc::FlowId;
use crate::simcore::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("flow {flow}: rates must be positive and finite (base {base}, burst {burst})")]
    Rate { flow: FlowId, base: f64, burst: f64 },
    #[error("flow {0}: burst duration must be positive")]
    Burst(FlowId),
    #[error("flow {0}: packet size must be at least 8 bytes")]
    PacketSize(FlowId),
}

/// Application data source: `base_rate_gbps` outside the burst window and
/// `burst_rate_gbps` inside [burst_start, burst_start + burst_duration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub flow_id: FlowId,
    pub packet_size: u32,
    pub base_rate_gbps: f64,
    pub burst_rate_gbps: f64,
    pub burst_start: SimTime,
    pub burst_duration: SimTime,
}

impl FlowSpec {
    pub fn validate(&self) -> Result<(), FlowError> {
        let ok = |r: f64| r.is_finite() && r > 0.0;
        if !ok(self.base_rate_gbps) || !ok(self.burst_rate_gbps) {
            return Err(FlowError::Rate { flow: self.flow_id, base: self.base_rate_gbps, burst: self.burst_rate_gbps });
        }
        if self.burst_duration == SimTime::ZERO {
            return Err(FlowError::Burst(self.flow_id));
        }
        if self.packet_size < 8 {
            return Err(FlowError::PacketSize(self.flow_id));
        }
        Ok(())
    }

    pub fn burst_end(&self) -> SimTime {
        self.burst_start + self.burst_duration
    }

    pub fn packet_bits(&self) -> f64 {
        self.packet_size as f64 * 8.0
    }

    /// Offered rate in Gbps at `t`.
    pub fn rate_at(&self, t: SimTime) -> f64 {
        if t >= self.burst_start && t < self.burst_end() {
            self.burst_rate_gbps
        } else {
            self.base_rate_gbps
        }
    }

    /// Bits produced by the application in [0, t].
    pub fn bits_offered(&self, t: SimTime) -> f64 {
        let (bs, be) = (self.burst_start.as_secs_f64(), self.burst_end().as_secs_f64());
        let t = t.as_secs_f64();
        let before = t.min(bs);
        let during = (t.min(be) - bs).max(0.0);
        let after = (t - be).max(0.0);
        (self.base_rate_gbps * (before + after) + self.burst_rate_gbps * during) * 1e9
    }

    /// Whole packets the application has handed over by `t`.
    pub fn packets_available(&self, t: SimTime) -> u64 {
        (self.bits_offered(t) / self.packet_bits() + 1e-9).floor() as u64
    }

    /// Earliest time at which `n` packets are available.
    pub fn time_of_packet(&self, n: u64) -> SimTime {
        let bits = n as f64 * self.packet_bits();
        let bs = self.burst_start.as_secs_f64();
        let be = self.burst_end().as_secs_f64();
        let base = self.base_rate_gbps * 1e9;
        let burst = self.burst_rate_gbps * 1e9;
        let at_bs = base * bs;
        let at_be = at_bs + burst * (be - bs);
        let secs = if bits <= at_bs {
            bits / base
        } else if bits <= at_be {
            bs + (bits - at_bs) / burst
        } else {
            be + (bits - at_be) / base
        };
        let mut t = SimTime((secs * 1e9).ceil().max(0.0) as u64);
        while self.packets_available(t) < n {
            t += SimTime(1);
        }
        while t > SimTime::ZERO && self.packets_available(SimTime(t.0 - 1)) >= n {
            t = SimTime(t.0 - 1);
        }
        t
    }

    /// Sequence number of the first packet produced inside the burst window.
    pub fn first_burst_seq(&self) -> u64 {
        let n = self.packets_available(self.burst_start);
        if self.time_of_packet(n) < self.burst_start || n == 0 {
            n
        } else {
            n - 1
        }
    }
}
