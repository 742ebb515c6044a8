//! Bounded buffer with the priority-aware Give drop policy.

use std::collections::VecDeque;

use crate::rlnc::Priority;

pub trait Tagged {
    fn priority(&self) -> Priority;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnqueueOutcome<T> {
    Enqueued,
    /// Buffer full; the incoming packet was discarded and is returned.
    DroppedIncoming(T),
    /// Buffer full; the newest buffered Low packet was discarded to admit the
    /// incoming High packet.
    EvictedLow(T),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueStats {
    pub offered: u64,
    pub enqueued: u64,
    pub dropped_incoming: u64,
    pub evicted: u64,
}

/// FIFO buffer bounded by packet count.
///
/// When full: an incoming Low packet is discarded; an incoming High packet
/// evicts the most recently received Low packet if there is one, else it is
/// discarded itself.
#[derive(Debug, Clone)]
pub struct BoundedQueue<T> {
    items: VecDeque<T>,
    capacity: usize,
    low: usize,
    pub stats: QueueStats,
}

impl<T: Tagged> BoundedQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self { items: VecDeque::new(), capacity, low: 0, stats: QueueStats::default() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn low_count(&self) -> usize {
        self.low
    }

    pub fn high_count(&self) -> usize {
        self.items.len() - self.low
    }

    pub fn enqueue_with_drop(&mut self, pkt: T) -> EnqueueOutcome<T> {
        self.stats.offered += 1;
        if !self.is_full() {
            self.push(pkt);
            return EnqueueOutcome::Enqueued;
        }
        match pkt.priority() {
            Priority::Low => {
                self.stats.dropped_incoming += 1;
                EnqueueOutcome::DroppedIncoming(pkt)
            }
            Priority::High => {
                if self.low == 0 {
                    self.stats.dropped_incoming += 1;
                    return EnqueueOutcome::DroppedIncoming(pkt);
                }
                let idx = self
                    .items
                    .iter()
                    .rposition(|p| p.priority() == Priority::Low)
                    .expect("low counter says a Low packet exists");
                let evicted = self.items.remove(idx).expect("index in range");
                self.low -= 1;
                self.stats.evicted += 1;
                self.push(pkt);
                EnqueueOutcome::EvictedLow(evicted)
            }
        }
    }

    fn push(&mut self, pkt: T) {
        if pkt.priority() == Priority::Low {
            self.low += 1;
        }
        self.stats.enqueued += 1;
        self.items.push_back(pkt);
    }

    pub fn pop_front(&mut self) -> Option<T> {
        let pkt = self.items.pop_front()?;
        if pkt.priority() == Priority::Low {
            self.low -= 1;
        }
        Some(pkt)
    }

    pub fn front(&self) -> Option<&T> {
        self.items.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Remove every packet matching `remove`; removed packets are
    /// handed to `on_removed` in FIFO order.
    pub fn drain_where<F, G>(&mut self, mut remove: F, mut on_removed: G)
    where
        F: FnMut(&T) -> bool,
        G: FnMut(T),
    {
        if !self.items.iter().any(&mut remove) {
            return;
        }
        let old = std::mem::take(&mut self.items);
        self.low = 0;
        for pkt in old {
            if remove(&pkt) {
                on_removed(pkt);
            } else {
                if pkt.priority() == Priority::Low {
                    self.low += 1;
                }
                self.items.push_back(pkt);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    struct P(u32, Priority);

    impl Tagged for P {
        fn priority(&self) -> Priority {
            self.1
        }
    }

    use Priority::{High, Low};

    fn full(cap: usize, pr: impl Fn(usize) -> Priority) -> BoundedQueue<P> {
        let mut q = BoundedQueue::new(cap);
        for i in 0..cap {
            assert_eq!(q.enqueue_with_drop(P(i as u32, pr(i))), EnqueueOutcome::Enqueued);
        }
        q
    }

    #[test]
    fn all_high_full_queue_drops_incoming_low() {
        let mut q = full(3, |_| High);
        assert_eq!(q.enqueue_with_drop(P(9, Low)), EnqueueOutcome::DroppedIncoming(P(9, Low)));
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn all_high_full_queue_drops_incoming_high() {
        let mut q = full(3, |_| High);
        assert_eq!(q.enqueue_with_drop(P(9, High)), EnqueueOutcome::DroppedIncoming(P(9, High)));
    }

    #[test]
    fn incoming_high_evicts_newest_low() {
        let mut q = full(4, |i| if i == 0 || i == 2 { Low } else { High });
        assert_eq!(q.enqueue_with_drop(P(9, High)), EnqueueOutcome::EvictedLow(P(2, Low)));
        let ids: Vec<u32> = q.iter().map(|p| p.0).collect();
        assert_eq!(ids, vec![0, 1, 3, 9]);
        assert_eq!(q.low_count(), 1);
    }

    #[test]
    fn single_low_is_evicted_for_high() {
        let mut q = full(3, |i| if i == 1 { Low } else { High });
        assert_eq!(q.enqueue_with_drop(P(7, High)), EnqueueOutcome::EvictedLow(P(1, Low)));
        assert_eq!(q.high_count(), 3);
    }

    #[test]
    fn drain_where_keeps_counts_consistent() {
        let mut q = full(6, |i| if i % 2 == 0 { Low } else { High });
        let mut removed = vec![];
        q.drain_where(|p| p.0 < 3, |p| removed.push(p.0));
        assert_eq!(removed, vec![0, 1, 2]);
        assert_eq!((q.len(), q.low_count()), (3, 1));
        assert_eq!(q.pop_front(), Some(P(3, High)));
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn never_over_capacity_and_high_never_lost_while_low_present(
            cap in 1usize..16,
            ops in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..200),
        ) {
            let mut q = BoundedQueue::new(cap);
            for (i, (is_high, pop)) in ops.into_iter().enumerate() {
                if pop {
                    q.pop_front();
                    continue;
                }
                let pr = if is_high { High } else { Low };
                let had_low = q.low_count() > 0;
                let out = q.enqueue_with_drop(P(i as u32, pr));
                if let EnqueueOutcome::DroppedIncoming(P(_, High)) = out {
                    prop_assert!(!had_low);
                }
                if let EnqueueOutcome::EvictedLow(p) = out {
                    prop_assert_eq!(p.1, Low);
                }
                prop_assert!(q.len() <= cap);
                prop_assert_eq!(q.low_count(), q.iter().filter(|p| p.1 == Low).count());
            }
            prop_assert_eq!(q.stats.offered, q.stats.enqueued + q.stats.dropped_incoming);
        }
    }
}
