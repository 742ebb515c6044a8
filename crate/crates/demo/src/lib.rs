//! Browser bindings for three small views of the simulator: the two-link
//! Markov channel, the six-packet walkthrough and a latency sweep. Every
//! export returns a JSON string; failures come back as `{"error": "..."}`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cotag::channel::{ChannelError, ChannelProcess, ChannelState, MarkovParams, RateLevels};
use cotag::harness::replay::{replay, ReplayCase};
use cotag::harness::{run_scenario, ConfigError, ScenarioConfig, Scheme};
use cotag::rlnc::Priority;
use cotag::simcore::{RngStreams, SimTime};

/// Longest trace and sweep the page may ask for.
pub const MAX_STEPS: usize = 5000;
pub const MAX_SWEEP_POINTS: usize = 8;
pub const MAX_SWEEP_SECONDS: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Serialize)]
pub struct TraceView {
    pub step_ms: f64,
    pub states: Vec<&'static str>,
    pub rate1_gbps: Vec<f64>,
    pub rate2_gbps: Vec<f64>,
    /// Share of steps spent in HH, HL, LH, LL.
    pub occupancy: [f64; 4],
    pub stationary: [f64; 4],
    pub indicator_correlation: f64,
}

pub fn markov_trace(p: f64, q: f64, steps: usize, seed: u64) -> Result<TraceView, DemoError> {
    if steps == 0 || steps > MAX_STEPS {
        return Err(DemoError::Input(format!("steps must be in 1..={MAX_STEPS}")));
    }
    let params = MarkovParams::new(p, q, SimTime::from_millis(100))?;
    let mut chan = ChannelProcess::stationary(params, RateLevels::default(), RngStreams::new(seed).stream("demo"));
    let mut view = TraceView {
        step_ms: 100.0,
        states: Vec::with_capacity(steps),
        rate1_gbps: Vec::with_capacity(steps),
        rate2_gbps: Vec::with_capacity(steps),
        occupancy: [0.0; 4],
        stationary: [q / 2.0, (1.0 - q) / 2.0, (1.0 - q) / 2.0, q / 2.0],
        indicator_correlation: 0.0,
    };
    let mut x = Vec::with_capacity(steps);
    let mut y = Vec::with_capacity(steps);
    for i in 0..steps {
        if i > 0 {
            chan.step();
        }
        let st = chan.state();
        let (r1, r2) = chan.rates();
        view.states.push(state_name(st));
        view.rate1_gbps.push(r1);
        view.rate2_gbps.push(r2);
        view.occupancy[st.index()] += 1.0 / steps as f64;
        x.push(matches!(st, ChannelState::HH | ChannelState::HL) as u8 as f64);
        y.push(matches!(st, ChannelState::HH | ChannelState::LH) as u8 as f64);
    }
    view.indicator_correlation = pearson(&x, &y);
    Ok(view)
}

fn state_name(st: ChannelState) -> &'static str {
    match st {
        ChannelState::HH => "HH",
        ChannelState::HL => "HL",
        ChannelState::LH => "LH",
        ChannelState::LL => "LL",
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[derive(Debug, Serialize)]
pub struct ReplayTx {
    pub time_ms: f64,
    /// 0 and 1 leave the gateway, 2 and 3 leave the two APs.
    pub link: usize,
    pub flow: Option<char>,
    pub label: u64,
    pub high: bool,
    pub lost: bool,
}

#[derive(Debug, Serialize)]
pub struct ReplayView {
    pub period_ms: f64,
    pub tx: Vec<ReplayTx>,
    pub deliveries: Vec<(f64, String)>,
    pub delivered_in_window: usize,
    pub violations: u64,
}

pub fn replay_view(case: &str, scheme: &str) -> Result<ReplayView, DemoError> {
    let case = match case {
        "balanced" => ReplayCase::Balanced,
        "unbalanced" => ReplayCase::Unbalanced,
        other => return Err(DemoError::Input(format!("unknown case {other:?}"))),
    };
    let scheme: Scheme = scheme.parse().map_err(DemoError::Input)?;
    let period = SimTime::from_millis(12);
    let r = replay(case, scheme, period);
    let letter = |f: u32| if f == 0 { 'A' } else { 'B' };
    Ok(ReplayView {
        period_ms: period.as_millis_f64(),
        tx: r
            .tx
            .iter()
            .map(|t| ReplayTx {
                time_ms: t.start.as_millis_f64(),
                link: t.link,
                flow: t.flow.map(letter),
                label: t.label,
                high: t.priority == Priority::High,
                lost: t.lost,
            })
            .collect(),
        deliveries: r
            .deliveries
            .iter()
            .map(|d| (d.time.as_millis_f64(), format!("{}{}", letter(d.flow), d.seq + 1)))
            .collect(),
        delivered_in_window: r.delivered_in_window,
        violations: r.violations.total(),
    })
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub scheme: String,
    pub latency_ms: f64,
    pub throughput_gbps: f64,
    pub decode_ratio: f64,
}

/// Every scheme at each latency, over a short run with a scaled-down burst.
pub fn latency_sweep(latencies_ms: &[f64], correlation: f64, per: f64, seed: u64) -> Result<Vec<SweepPoint>, DemoError> {
    if latencies_ms.is_empty() || latencies_ms.len() > MAX_SWEEP_POINTS {
        return Err(DemoError::Input(format!("between 1 and {MAX_SWEEP_POINTS} latencies")));
    }
    let mut base = ScenarioConfig {
        scenario: "demo".into(),
        seed,
        per,
        corr_target: Some(correlation),
        duration_s: MAX_SWEEP_SECONDS / 2.0,
        ..ScenarioConfig::default()
    };
    base.traffic.burst_start_s = 0.05;
    base.traffic.burst_duration_s = 0.45;
    let mut out = Vec::new();
    for &latency_ms in latencies_ms {
        for scheme in Scheme::ALL {
            let cfg = ScenarioConfig { scheme, latency_ms, ..base.clone() };
            let rec = run_scenario(&cfg)?.record;
            out.push(SweepPoint {
                scheme: scheme.to_string(),
                latency_ms,
                throughput_gbps: rec.throughput_gbps,
                decode_ratio: rec.decode_ratio,
            });
        }
    }
    Ok(out)
}

fn to_json<T: Serialize>(result: Result<T, DemoError>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[wasm_bindgen(js_name = markovTrace)]
pub fn markov_trace_json(p: f64, q: f64, steps: usize, seed: u64) -> String {
    to_json(markov_trace(p, q, steps, seed))
}

#[wasm_bindgen(js_name = replayWalkthrough)]
pub fn replay_json(case: &str, scheme: &str) -> String {
    to_json(replay_view(case, scheme))
}

#[wasm_bindgen(js_name = latencySweep)]
pub fn latency_sweep_json(latencies_ms: Vec<f64>, correlation: f64, per: f64, seed: u64) -> String {
    to_json(latency_sweep(&latencies_ms, correlation, per, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_occupancy_sums_to_one() {
        let v = markov_trace(0.3, 0.67, 2000, 1).unwrap();
        assert_eq!(v.states.len(), 2000);
        assert!((v.occupancy.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_inputs_become_error_json() {
        assert!(markov_trace_json(1.5, 0.5, 10, 0).contains("error"));
        assert!(markov_trace_json(0.5, 0.5, 0, 0).contains("error"));
        assert!(replay_json("sideways", "cotag").contains("error"));
        assert!(latency_sweep_json(vec![], 0.0, 0.0, 0).contains("error"));
    }
}
