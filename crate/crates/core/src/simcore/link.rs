use rand::Rng;

use super::SimTime;

pub type LinkId = usize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub sent: u64,
    pub sent_bytes: u64,
    pub dropped_per: u64,
    pub arrived: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    /// The packet reaches the far end at `arrival`; the link frees at `done`.
    Delivered { arrival: SimTime, done: SimTime },
    /// Lost to the packet error rate; the link still spends the serialization time.
    Dropped { done: SimTime },
    /// No bandwidth right now; retry on the next bandwidth update.
    Stalled,
}

/// A unidirectional link with time-varying rate, propagation delay and PER.
#[derive(Debug, Clone)]
pub struct Link {
    pub id: LinkId,
    pub src: usize,
    pub dst: usize,
    rate_bps: f64,
    /// Fixed per-packet serialization time; overrides the bit rate when set.
    slot: Option<SimTime>,
    pub delay: SimTime,
    pub per: f64,
    busy: bool,
    stalled: bool,
    pub stats: LinkStats,
}

impl Link {
    pub fn new(id: LinkId, src: usize, dst: usize, rate_bps: f64, delay: SimTime, per: f64) -> Self {
        assert!((0.0..=1.0).contains(&per), "per must be a probability");
        Self {
            id,
            src,
            dst,
            rate_bps: rate_bps.max(0.0),
            slot: None,
            delay,
            per,
            busy: false,
            stalled: false,
            stats: LinkStats::default(),
        }
    }

    /// Link that takes exactly `slot` per packet, whatever its size.
    pub fn slotted(id: LinkId, src: usize, dst: usize, slot: SimTime, delay: SimTime) -> Self {
        let mut link = Self::new(id, src, dst, 0.0, delay, 0.0);
        link.slot = Some(slot);
        link
    }

    pub fn rate_bps(&self) -> f64 {
        self.rate_bps
    }

    pub fn set_rate_bps(&mut self, rate: f64) {
        self.rate_bps = rate.max(0.0);
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    pub fn is_stalled(&self) -> bool {
        self.stalled
    }

    /// Mark the transmitter free; called when its opportunity event fires.
    pub fn release(&mut self) {
        self.busy = false;
    }

    /// Returns true if the link was waiting for bandwidth and now has some.
    pub fn clear_stall(&mut self) -> bool {
        let was = self.stalled;
        if self.rate_bps > 0.0 || self.slot.is_some() {
            self.stalled = false;
        }
        was && !self.stalled
    }

    pub fn serialization(&self, size_bytes: u32) -> Option<SimTime> {
        if let Some(slot) = self.slot {
            return Some(slot);
        }
        if self.rate_bps <= 0.0 {
            return None;
        }
        let ns = (size_bytes as f64 * 8.0 * 1e9 / self.rate_bps).round() as u64;
        Some(SimTime(ns.max(1)))
    }

    /// Start serializing a packet at `now`. One uniform draw is always taken
    /// from `rng` for the loss decision so the stream does not depend on `per`.
    pub fn transmit<R: Rng + ?Sized>(&mut self, size_bytes: u32, now: SimTime, rng: &mut R) -> TxOutcome {
        let Some(ser) = self.serialization(size_bytes) else {
            self.stalled = true;
            return TxOutcome::Stalled;
        };
        let u: f64 = rng.random();
        let done = now + ser;
        self.busy = true;
        self.stats.sent += 1;
        self.stats.sent_bytes += size_bytes as u64;
        if u < self.per {
            self.stats.dropped_per += 1;
            TxOutcome::Dropped { done }
        } else {
            self.stats.arrived += 1;
            TxOutcome::Delivered { arrival: done + self.delay, done }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn serialization_of_8192_bytes_at_6_gbps() {
        let mut link = Link::new(0, 0, 1, 6e9, SimTime::ZERO, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let exact_ns = 8192.0 * 8.0 / 6e9 * 1e9;
        match link.transmit(8192, SimTime::ZERO, &mut rng) {
            TxOutcome::Delivered { arrival, done } => {
                assert_eq!(arrival, done);
                assert!((arrival.0 as f64 - exact_ns).abs() <= 0.5, "{arrival:?} vs {exact_ns}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn propagation_delay_adds_to_arrival() {
        let mut link = Link::new(0, 0, 1, 8e9, SimTime::from_micros(5), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            link.transmit(1000, SimTime(100), &mut rng),
            TxOutcome::Delivered { arrival: SimTime(100 + 1000 + 5000), done: SimTime(1100) }
        );
    }

    #[test]
    fn per_one_always_drops() {
        let mut link = Link::new(0, 0, 1, 1e9, SimTime::ZERO, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(matches!(link.transmit(100, SimTime::ZERO, &mut rng), TxOutcome::Dropped { .. }));
        }
    }

    #[test]
    fn per_drop_frequency() {
        let mut link = Link::new(0, 0, 1, 1e9, SimTime::ZERO, 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        for _ in 0..n {
            link.transmit(100, SimTime::ZERO, &mut rng);
        }
        let freq = link.stats.dropped_per as f64 / n as f64;
        assert!((freq - 1e-4).abs() <= 1e-5, "freq {freq}");
        assert_eq!(link.stats.sent, link.stats.dropped_per + link.stats.arrived);
    }

    #[test]
    fn zero_bandwidth_stalls_without_dividing() {
        let mut link = Link::new(0, 0, 1, 0.0, SimTime::ZERO, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(link.transmit(100, SimTime::ZERO, &mut rng), TxOutcome::Stalled);
        assert!(link.is_stalled() && !link.is_busy());
        assert!(!link.clear_stall());
        link.set_rate_bps(1e9);
        assert!(link.clear_stall());
    }

    #[test]
    fn slotted_link_ignores_size() {
        let mut link = Link::slotted(0, 0, 1, SimTime(500), SimTime(3));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(
            link.transmit(9000, SimTime(10), &mut rng),
            TxOutcome::Delivered { arrival: SimTime(513), done: SimTime(510) }
        );
    }
}
