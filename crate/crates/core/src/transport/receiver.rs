use std::collections::BTreeSet;
use std::ops::Range;

/// Cumulative acknowledgement plus the sequence number that triggered it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub cum: u64,
    pub echo: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReceiverStats {
    pub packets: u64,
    pub duplicates: u64,
    pub in_order: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub ack: Option<Ack>,
    /// Sequence numbers newly released to the application in order.
    pub released: Range<u64>,
}

/// In-order reassembly for one flow.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    expected: u64,
    held: BTreeSet<u64>,
    silent_duplicates: bool,
    pub stats: ReceiverStats,
}

impl Receiver {
    /// With `silent_duplicates`, a copy of a packet already seen is dropped
    /// without an acknowledgement.
    pub fn new(silent_duplicates: bool) -> Self {
        Self { silent_duplicates, ..Default::default() }
    }

    pub fn expected(&self) -> u64 {
        self.expected
    }

    pub fn on_packet(&mut self, seq: u64) -> Received {
        self.stats.packets += 1;
        let before = self.expected;
        if seq < self.expected || self.held.contains(&seq) {
            self.stats.duplicates += 1;
            let ack = (!self.silent_duplicates).then_some(Ack { cum: self.expected, echo: seq });
            return Received { ack, released: before..before };
        }
        if seq == self.expected {
            self.expected += 1;
            while self.held.remove(&self.expected) {
                self.expected += 1;
            }
        } else {
            self.held.insert(seq);
        }
        self.stats.in_order += self.expected - before;
        Received { ack: Some(Ack { cum: self.expected, echo: seq }), released: before..self.expected }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reorders_and_releases() {
        let mut r = Receiver::new(false);
        assert_eq!(r.on_packet(1), Received { ack: Some(Ack { cum: 0, echo: 1 }), released: 0..0 });
        assert_eq!(r.on_packet(0), Received { ack: Some(Ack { cum: 2, echo: 0 }), released: 0..2 });
        assert_eq!(r.on_packet(0).ack, Some(Ack { cum: 2, echo: 0 }));
        assert_eq!(r.stats, ReceiverStats { packets: 3, duplicates: 1, in_order: 2 });
    }

    #[test]
    fn silent_duplicates_send_nothing() {
        let mut r = Receiver::new(true);
        r.on_packet(0);
        let again = r.on_packet(0);
        assert_eq!(again.ack, None);
        assert!(again.released.is_empty());
    }
}
