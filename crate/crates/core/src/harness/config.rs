use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, MarkovParams, RateLevels};
use crate::cotag::CodingMode;
use crate::simcore::SimTime;
use crate::transport::{CubicParams, FlowError, FlowSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("{field}: {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Cotag,
    /// One transport connection whose packets alternate between the two paths.
    SinglePath,
    /// Every packet is copied onto both paths.
    Duplicate,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Cotag, Scheme::SinglePath, Scheme::Duplicate];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Cotag => "cotag",
            Scheme::SinglePath => "single-path",
            Scheme::Duplicate => "duplicate",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown scheme {s:?} (expected cotag, single-path or duplicate)"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportKind {
    #[default]
    Cubic,
    OpenLoop,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    #[default]
    Markov,
    Trace,
    Constant,
}

/// Bandwidth source for the two AP to device links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub p: f64,
    pub q: f64,
    pub step_ms: f64,
    pub levels: RateLevels,
    pub trace: Option<PathBuf>,
    /// Use the trace's first column for both links.
    pub single_link_trace: bool,
    pub rate1_gbps: f64,
    pub rate2_gbps: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            kind: ChannelKind::Markov,
            p: 0.5,
            q: 0.5,
            step_ms: 100.0,
            levels: RateLevels::default(),
            trace: None,
            single_link_trace: false,
            rate1_gbps: 10.0,
            rate2_gbps: 10.0,
        }
    }
}

/// Identical burst sources, one per flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub flows: u32,
    pub packet_size: u32,
    pub base_rate_gbps: f64,
    pub burst_rate_gbps: f64,
    pub burst_start_s: f64,
    pub burst_duration_s: f64,
    /// Senders stop handing new packets to the network at this time.
    pub stop_s: Option<f64>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            flows: 10,
            packet_size: 8192,
            base_rate_gbps: 0.6,
            burst_rate_gbps: 2.0,
            burst_start_s: 0.2,
            burst_duration_s: 2.0,
            stop_s: None,
        }
    }
}

impl TrafficConfig {
    pub fn flow_specs(&self) -> Vec<FlowSpec> {
        (0..self.flows)
            .map(|flow_id| FlowSpec {
                flow_id,
                packet_size: self.packet_size,
                base_rate_gbps: self.base_rate_gbps,
                burst_rate_gbps: self.burst_rate_gbps,
                burst_start: SimTime::from_secs_f64(self.burst_start_s),
                burst_duration: SimTime::from_secs_f64(self.burst_duration_s),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub scheme: Scheme,
    pub seed: u64,
    pub duration_s: f64,
    pub per: f64,
    /// One-way server to gateway delay; acknowledgements take the same time back.
    pub latency_ms: f64,
    #[serde(rename = "T_ms")]
    pub t_ms: f64,
    pub coding: CodingMode,
    pub transport: TransportKind,
    pub cubic: CubicParams,
    /// Packets per node buffer.
    pub buffer_packets: usize,
    pub gateway_link_gbps: f64,
    pub link_delay_us: f64,
    /// Device to server return path on top of `latency_ms`.
    pub ack_delay_us: f64,
    /// When set, `channel.q` is replaced by the value giving this indicator
    /// correlation.
    pub corr_target: Option<f64>,
    pub channel: ChannelConfig,
    pub traffic: TrafficConfig,
    pub event_log: bool,
    pub audit: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            scheme: Scheme::Cotag,
            seed: 1,
            duration_s: 2.25,
            per: 0.0,
            latency_ms: 0.0,
            t_ms: 0.5,
            coding: CodingMode::Symbolic,
            transport: TransportKind::Cubic,
            cubic: CubicParams::default(),
            buffer_packets: 2048,
            gateway_link_gbps: 12.0,
            link_delay_us: 5.0,
            ack_delay_us: 10.0,
            corr_target: None,
            channel: ChannelConfig::default(),
            traffic: TrafficConfig::default(),
            event_log: false,
            audit: false,
        }
    }
}

/// `q` for which the stationary chain has indicator correlation `rho`.
pub fn q_for_correlation(rho: f64) -> f64 {
    (1.0 + rho) / 2.0
}

fn finite_nonneg(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be finite and non-negative")))
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be positive")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.into(), source: Box::new(e) })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn period(&self) -> SimTime {
        SimTime::from_millis_f64(self.t_ms)
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    pub fn latency(&self) -> SimTime {
        SimTime::from_millis_f64(self.latency_ms)
    }

    /// Chain parameters after applying `corr_target`.
    pub fn markov_params(&self) -> Result<MarkovParams, ConfigError> {
        let q = self.corr_target.map_or(self.channel.q, q_for_correlation);
        Ok(MarkovParams::new(self.channel.p, q, SimTime::from_millis_f64(self.channel.step_ms))?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        finite_nonneg("duration_s", self.duration_s)?;
        if !(0.0..1.0).contains(&self.per) {
            return Err(invalid("per", format!("{} not in [0, 1)", self.per)));
        }
        finite_nonneg("latency_ms", self.latency_ms)?;
        positive("T_ms", self.t_ms)?;
        if self.period() == SimTime::ZERO {
            return Err(invalid("T_ms", "shorter than one nanosecond"));
        }
        if self.buffer_packets == 0 {
            return Err(invalid("buffer_packets", "must hold at least one packet"));
        }
        positive("gateway_link_gbps", self.gateway_link_gbps)?;
        finite_nonneg("link_delay_us", self.link_delay_us)?;
        finite_nonneg("ack_delay_us", self.ack_delay_us)?;
        if let Some(rho) = self.corr_target {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(invalid("corr_target", format!("{rho} not in [-1, 1]")));
            }
        }
        let c = &self.cubic;
        if !(c.beta > 0.0 && c.beta < 1.0) {
            return Err(invalid("cubic.beta", format!("{} not in (0, 1)", c.beta)));
        }
        positive("cubic.c", c.c)?;
        positive("cubic.initial_window", c.initial_window)?;
        if c.max_window < c.initial_window {
            return Err(invalid("cubic.max_window", "below the initial window"));
        }
        if c.dup_threshold == 0 {
            return Err(invalid("cubic.dup_threshold", "must be at least 1"));
        }
        positive("cubic.min_rto_ms", c.min_rto_ms)?;
        positive("cubic.initial_rto_ms", c.initial_rto_ms)?;
        match self.channel.kind {
            ChannelKind::Markov => {
                self.markov_params()?;
                self.channel.levels.validate()?;
            }
            ChannelKind::Trace => {
                let path = self.channel.trace.as_ref().ok_or_else(|| invalid("channel.trace", "no trace file given"))?;
                if !path.is_file() {
                    return Err(invalid("channel.trace", format!("{} does not exist", path.display())));
                }
            }
            ChannelKind::Constant => {
                finite_nonneg("channel.rate1_gbps", self.channel.rate1_gbps)?;
                finite_nonneg("channel.rate2_gbps", self.channel.rate2_gbps)?;
            }
        }
        let t = &self.traffic;
        if t.flows == 0 {
            return Err(invalid("traffic.flows", "need at least one flow"));
        }
        if let Some(stop) = t.stop_s {
            finite_nonneg("traffic.stop_s", stop)?;
        }
        for spec in t.flow_specs() {
            spec.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml(), "mem").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            "scheme = \"duplicate\"\nT_ms = 5\n[channel]\nkind = \"constant\"\nrate1_gbps = 4\n",
            "mem",
        )
        .unwrap();
        assert_eq!(cfg.scheme, Scheme::Duplicate);
        assert_eq!(cfg.t_ms, 5.0);
        assert_eq!(cfg.channel.kind, ChannelKind::Constant);
        assert_eq!(cfg.channel.rate1_gbps, 4.0);
        assert_eq!(cfg.channel.rate2_gbps, 10.0);
        assert_eq!(cfg.traffic.packet_size, 8192);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_toml_str("sheme = \"cotag\"\n", "x.toml").unwrap_err();
        assert!(err.to_string().starts_with("x.toml"), "{err}");
    }

    #[test]
    fn bad_values_name_the_field() {
        let mut cfg = ScenarioConfig::default();
        cfg.per = 1.5;
        assert!(cfg.validate().unwrap_err().to_string().starts_with("per"));
        let mut cfg = ScenarioConfig::default();
        cfg.channel.kind = ChannelKind::Trace;
        cfg.channel.trace = Some("/nonexistent/trace.csv".into());
        assert!(cfg.validate().unwrap_err().to_string().contains("does not exist"));
        let mut cfg = ScenarioConfig::default();
        cfg.channel.q = -0.1;
        assert!(matches!(cfg.validate(), Err(ConfigError::Channel(_))));
    }

    #[test]
    fn corr_target_overrides_q() {
        let mut cfg = ScenarioConfig::default();
        cfg.corr_target = Some(-0.34);
        assert!((cfg.markov_params().unwrap().q - 0.33).abs() < 1e-12);
    }

    #[test]
    fn scheme_names_parse() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("tcp".parse::<Scheme>().is_err());
    }
}
