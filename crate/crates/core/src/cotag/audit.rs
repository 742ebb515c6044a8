use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::rlnc::FlowId;

pub const AUDIT_HEADER: &str = "cohort,flow,n_k,high_sent,low_sent,ap1_sent,ap2_sent,delivered,decoded";

/// Per (cohort, flow) accounting across the whole path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CohortAudit {
    pub cohort: u64,
    pub flow: FlowId,
    pub n_k: u32,
    pub high_sent: u32,
    pub low_sent: u32,
    pub ap1_sent: u32,
    pub ap2_sent: u32,
    pub delivered: u32,
    pub decoded: bool,
}

/// Counters for protocol invariants. All should stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Violations {
    /// A link carried a label lower than one it carried before.
    pub label_regression: u64,
    /// A flow got cohort k material after material from a later cohort.
    pub stale_delivery: u64,
    /// A High packet was discarded for lack of space while a Low packet sat
    /// in the same buffer.
    pub high_dropped_with_low: u64,
    /// An AP sent cohort k outside its window between the first k+1 and the
    /// first k+2 arrival.
    pub giving_bound: u64,
    /// A packet or byte count failed to balance.
    pub conservation: u64,
    /// The gateway sent more High packets for a cohort than it had sources.
    pub high_over_n: u64,
    /// A decoded payload differed from the original.
    pub payload_mismatch: u64,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.label_regression
            + self.stale_delivery
            + self.high_dropped_with_low
            + self.giving_bound
            + self.conservation
            + self.high_over_n
            + self.payload_mismatch
    }
}

#[derive(Debug, Clone, Default)]
pub struct Audit {
    enabled: bool,
    rows: BTreeMap<(u64, FlowId), CohortAudit>,
    pub violations: Violations,
}

impl Audit {
    pub fn new(enabled: bool) -> Self {
        Self { enabled, ..Default::default() }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// Apply `f` to the row for (cohort, flow) when auditing is on.
    pub fn row(&mut self, cohort: u64, flow: FlowId, f: impl FnOnce(&mut CohortAudit)) {
        if !self.enabled {
            return;
        }
        let row = self
            .rows
            .entry((cohort, flow))
            .or_insert_with(|| CohortAudit { cohort, flow, ..Default::default() });
        f(row);
    }

    pub fn records(&self) -> Vec<CohortAudit> {
        self.rows.values().copied().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(AUDIT_HEADER);
        out.push('\n');
        for r in self.rows.values() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.cohort, r.flow, r.n_k, r.high_sent, r.low_sent, r.ap1_sent, r.ap2_sent, r.delivered, r.decoded
            );
        }
        out
    }
}
