use std::fmt::Write as _;

use super::{EventKind, SimTime};
use crate::rlnc::Priority;

pub const LOG_HEADER: &str = "time_ns,node,kind,flow,cohort,priority,outcome";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub time: SimTime,
    pub node: &'static str,
    pub kind: EventKind,
    pub flow: Option<u32>,
    pub cohort: Option<u64>,
    pub priority: Option<Priority>,
    pub outcome: &'static str,
}

/// Line-delimited dispatch log. Disabled logs drop records without formatting.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    enabled: bool,
    buf: String,
    lines: usize,
}

impl EventLog {
    pub fn enabled() -> Self {
        let mut buf = String::with_capacity(1 << 16);
        buf.push_str(LOG_HEADER);
        buf.push('\n');
        Self { enabled: true, buf, lines: 0 }
    }

    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn record(&mut self, rec: LogRecord) {
        if !self.enabled {
            return;
        }
        let _ = write!(self.buf, "{},{},{},", rec.time.as_nanos(), rec.node, rec.kind.as_str());
        if let Some(f) = rec.flow {
            let _ = write!(self.buf, "{f}");
        }
        self.buf.push(',');
        if let Some(c) = rec.cohort {
            let _ = write!(self.buf, "{c}");
        }
        self.buf.push(',');
        if let Some(p) = rec.priority {
            self.buf.push_str(p.as_str());
        }
        self.buf.push(',');
        self.buf.push_str(rec.outcome);
        self.buf.push('\n');
        self.lines += 1;
    }

    pub fn len(&self) -> usize {
        self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines == 0
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_optional_fields_as_empty() {
        let mut log = EventLog::enabled();
        log.record(LogRecord {
            time: SimTime(42),
            node: "ap1",
            kind: EventKind::PacketArrival,
            flow: Some(3),
            cohort: Some(7),
            priority: Some(Priority::Low),
            outcome: "enqueued",
        });
        log.record(LogRecord {
            time: SimTime(50),
            node: "gw",
            kind: EventKind::CohortTick,
            flow: None,
            cohort: Some(8),
            priority: None,
            outcome: "tick",
        });
        let lines: Vec<&str> = log.as_str().lines().collect();
        assert_eq!(lines[0], LOG_HEADER);
        assert_eq!(lines[1], "42,ap1,packet_arrival,3,7,low,enqueued");
        assert_eq!(lines[2], "50,gw,cohort_tick,,8,,tick");
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn disabled_log_stays_empty() {
        let mut log = EventLog::disabled();
        log.record(LogRecord {
            time: SimTime(1),
            node: "x",
            kind: EventKind::FlowControl,
            flow: None,
            cohort: None,
            priority: None,
            outcome: "",
        });
        assert!(log.is_empty() && log.as_str().is_empty());
    }
}
