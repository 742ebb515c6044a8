//! Coded forwarding with Taking and Giving: gateway, access point and device
//! behaviour, independent of how events are scheduled.

mod ap;
mod audit;
mod device;
mod gate;
mod gateway;
mod packet;

pub use ap::{AccessPoint, ApStats};
pub use audit::{Audit, CohortAudit, Violations, AUDIT_HEADER};
pub use device::{Delivery, Device, DeviceStats, GenOutcome};
pub use gate::LabelGate;
pub use gateway::{Gateway, GatewayStats};
pub use packet::{payload_seq, source_payload, Body, GenInfo, Packet, MARKER_BYTES, NO_FLOW};

use serde::{Deserialize, Serialize};

/// How coded packets are represented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodingMode {
    /// Real GF(2^8) arithmetic on real payloads.
    Exact,
    /// Rank bookkeeping only; fast enough for long runs at line rate.
    #[default]
    Symbolic,
}
