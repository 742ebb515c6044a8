//! Scenario configuration, the simulated topology, sweeps and result files.

mod config;
mod grid;
mod metrics;
pub mod replay;
mod world;

pub use config::{
    q_for_correlation, ChannelConfig, ChannelKind, ConfigError, ScenarioConfig, Scheme, TrafficConfig, TransportKind,
};
pub use grid::{expand_grid, run_grid, GridAxes, GridError};
pub use metrics::{
    parse_records, read_csv, records_to_csv, write_csv, write_records, CsvError, MetricsRecord, CSV_COLUMNS,
};
pub use world::{
    run_scenario, AppDelivery, FlowSummary, Injection, RunOutput, RunStats, TxRecord, World, WorldOptions,
};
