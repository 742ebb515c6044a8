//! Simplified transport: application sources, a window-based sender, an
//! in-order receiver and duplicate-path scheduling.

mod duplicate;
mod flow;
mod receiver;
mod sender;

pub use duplicate::duplicate_multipath_schedule;
pub use flow::{FlowError, FlowSpec};
pub use receiver::{Ack, Received, Receiver, ReceiverStats};
pub use sender::{Control, CubicParams, SendItem, Sender, SenderStats};
