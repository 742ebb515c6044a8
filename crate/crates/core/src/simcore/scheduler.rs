use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use super::SimTime;

/// The event classes the engine dispatches. At equal timestamps they run in
/// declaration order, so a bandwidth change or cohort boundary is visible to
/// every arrival at that instant, and arrivals are visible to the transmit
/// decision taken at that instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    BandwidthUpdate,
    CohortTick,
    PacketArrival,
    FlowControl,
    TransmitOpportunity,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::BandwidthUpdate => "bandwidth_update",
            EventKind::CohortTick => "cohort_tick",
            EventKind::PacketArrival => "packet_arrival",
            EventKind::FlowControl => "flow_control",
            EventKind::TransmitOpportunity => "transmit_opportunity",
        }
    }
}

/// Tie-break class of an event payload; lower runs first at equal times.
pub trait Phased {
    fn phase(&self) -> u8;
}

impl Phased for EventKind {
    fn phase(&self) -> u8 {
        *self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event scheduled at {at} but clock is already at {now}")]
pub struct ScheduleError {
    pub at: SimTime,
    pub now: SimTime,
}

struct Entry<E> {
    time: SimTime,
    phase: u8,
    seq: u64,
    event: E,
}

impl<E> Entry<E> {
    fn key(&self) -> (SimTime, u8, u64) {
        (self.time, self.phase, self.seq)
    }
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Event queue ordered by (time, phase, insertion sequence).
pub struct Scheduler<E> {
    heap: BinaryHeap<Entry<E>>,
    now: SimTime,
    seq: u64,
    dispatched: u64,
}

impl<E: Phased> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Phased> Scheduler<E> {
    pub fn new() -> Self {
        Self { heap: BinaryHeap::new(), now: SimTime::ZERO, seq: 0, dispatched: 0 }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<(), ScheduleError> {
        if at < self.now {
            return Err(ScheduleError { at, now: self.now });
        }
        let phase = event.phase();
        self.heap.push(Entry { time: at, phase, seq: self.seq, event });
        self.seq += 1;
        Ok(())
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    /// Remove the next event if it is due at or before `limit`.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<(SimTime, E)> {
        if self.heap.peek()?.time > limit {
            return None;
        }
        let entry = self.heap.pop()?;
        self.now = entry.time;
        self.dispatched += 1;
        Some((entry.time, entry.event))
    }

    /// Dispatch every event due at or before `until`, then park the clock at
    /// `until`. Returns the number of events dispatched by this call.
    pub fn run_until<F>(&mut self, until: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, SimTime, E),
    {
        let start = self.dispatched;
        while let Some((t, ev)) = self.pop_until(until) {
            handler(self, t, ev);
        }
        if until > self.now && until != SimTime::MAX {
            self.now = until;
        }
        self.dispatched - start
    }
}
