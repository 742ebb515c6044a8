//! Joint two-link bandwidth model.
//!
//! Each link's rate is quantized to High or Low. Link 1 flips its level with
//! probability `p` per step; link 2 then takes the same level as link 1 with
//! probability `q`, independently of its own previous level. Within a state
//! each link's rate is Gaussian around the level mean, clamped at zero.

mod trace;

pub use trace::{
    calibrate_from_trace, load_trace, parse_trace, save_trace, write_trace, Calibration,
    TraceOptions, TraceRecord,
};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simcore::SimTime;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace needs at least {need} records, got {got}")]
    TooShort { need: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    High,
    Low,
}

impl Level {
    fn flipped(self) -> Level {
        match self {
            Level::High => Level::Low,
            Level::Low => Level::High,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelState {
    HH,
    HL,
    LH,
    LL,
}

impl ChannelState {
    pub const ALL: [ChannelState; 4] =
        [ChannelState::HH, ChannelState::HL, ChannelState::LH, ChannelState::LL];

    pub fn from_levels(link1: Level, link2: Level) -> Self {
        match (link1, link2) {
            (Level::High, Level::High) => ChannelState::HH,
            (Level::High, Level::Low) => ChannelState::HL,
            (Level::Low, Level::High) => ChannelState::LH,
            (Level::Low, Level::Low) => ChannelState::LL,
        }
    }

    pub fn levels(self) -> (Level, Level) {
        match self {
            ChannelState::HH => (Level::High, Level::High),
            ChannelState::HL => (Level::High, Level::Low),
            ChannelState::LH => (Level::Low, Level::High),
            ChannelState::LL => (Level::Low, Level::Low),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelState::HH => "HH",
            ChannelState::HL => "HL",
            ChannelState::LH => "LH",
            ChannelState::LL => "LL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovParams {
    pub p: f64,
    pub q: f64,
    pub step: SimTime,
}

impl MarkovParams {
    pub fn new(p: f64, q: f64, step: SimTime) -> Result<Self, ChannelError> {
        let params = Self { p, q, step };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(ChannelError::InvalidParams(format!("p = {} not in [0, 1]", self.p)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(ChannelError::InvalidParams(format!("q = {} not in [0, 1]", self.q)));
        }
        if self.step == SimTime::ZERO {
            return Err(ChannelError::InvalidParams("step must be positive".into()));
        }
        Ok(())
    }
}

impl Default for MarkovParams {
    fn default() -> Self {
        Self { p: 0.5, q: 0.5, step: SimTime::from_millis(100) }
    }
}

/// How the two spread numbers in [`RateLevels`] are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpreadKind {
    #[default]
    StdDev,
    Variance,
}

/// Per-level Gaussian rate parameters, in Gbps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLevels {
    pub mean_low: f64,
    pub mean_high: f64,
    pub spread_low: f64,
    pub spread_high: f64,
    #[serde(default)]
    pub spread_kind: SpreadKind,
}

impl Default for RateLevels {
    fn default() -> Self {
        Self { mean_low: 3.0, mean_high: 10.0, spread_low: 0.3, spread_high: 1.0, spread_kind: SpreadKind::StdDev }
    }
}

impl RateLevels {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.mean_low > 0.0 && self.mean_high > 0.0) {
            return Err(ChannelError::InvalidParams("level means must be positive".into()));
        }
        if self.mean_high < self.mean_low {
            return Err(ChannelError::InvalidParams("high mean below low mean".into()));
        }
        if !(self.spread_low >= 0.0 && self.spread_high >= 0.0) {
            return Err(ChannelError::InvalidParams("spreads must be non-negative".into()));
        }
        Ok(())
    }

    pub fn mean(&self, level: Level) -> f64 {
        match level {
            Level::High => self.mean_high,
            Level::Low => self.mean_low,
        }
    }

    pub fn std_dev(&self, level: Level) -> f64 {
        let s = match level {
            Level::High => self.spread_high,
            Level::Low => self.spread_low,
        };
        match self.spread_kind {
            SpreadKind::StdDev => s,
            SpreadKind::Variance => s.sqrt(),
        }
    }

    pub fn zero_spread(self) -> Self {
        Self { spread_low: 0.0, spread_high: 0.0, ..self }
    }
}

pub fn transition_prob(from: ChannelState, to: ChannelState, params: &MarkovParams) -> f64 {
    let (from1, _) = from.levels();
    let (to1, to2) = to.levels();
    let link1 = if to1 == from1 { 1.0 - params.p } else { params.p };
    let link2 = if to2 == to1 { params.q } else { 1.0 - params.q };
    link1 * link2
}

/// Row-stochastic matrix indexed by [`ChannelState::index`].
pub fn transition_matrix(params: &MarkovParams) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for from in ChannelState::ALL {
        for to in ChannelState::ALL {
            m[from.index()][to.index()] = transition_prob(from, to, params);
        }
    }
    m
}

/// Two uniform draws are consumed per step regardless of outcome, so the
/// random stream stays aligned across parameter changes.
pub fn step_state<R: Rng + ?Sized>(st: ChannelState, params: &MarkovParams, rng: &mut R) -> ChannelState {
    let flip: f64 = rng.random();
    let matched: f64 = rng.random();
    let (link1, _) = st.levels();
    let link1 = if flip < params.p { link1.flipped() } else { link1 };
    let link2 = if matched < params.q { link1 } else { link1.flipped() };
    ChannelState::from_levels(link1, link2)
}

pub fn sample_bandwidth<R: Rng + ?Sized>(st: ChannelState, levels: &RateLevels, rng: &mut R) -> (f64, f64) {
    let (l1, l2) = st.levels();
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let r1 = (levels.mean(l1) + levels.std_dev(l1) * z1).max(0.0);
    let r2 = (levels.mean(l2) + levels.std_dev(l2) * z2).max(0.0);
    (r1, r2)
}

/// Stationary correlation of the two High/Low indicator processes.
pub fn state_correlation(params: &MarkovParams) -> f64 {
    2.0 * params.q - 1.0
}

/// Stationary distribution for `0 < p < 1`: link 1 is a symmetric flip chain.
pub fn stationary_distribution(params: &MarkovParams) -> [f64; 4] {
    let q = params.q;
    [q / 2.0, (1.0 - q) / 2.0, (1.0 - q) / 2.0, q / 2.0]
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// A running two-link channel: current state plus the rates sampled for it.
#[derive(Debug, Clone)]
pub struct ChannelProcess<R> {
    pub params: MarkovParams,
    pub levels: RateLevels,
    state: ChannelState,
    rates: (f64, f64),
    rng: R,
}

impl<R: Rng> ChannelProcess<R> {
    pub fn new(params: MarkovParams, levels: RateLevels, initial: ChannelState, mut rng: R) -> Self {
        let rates = sample_bandwidth(initial, &levels, &mut rng);
        Self { params, levels, state: initial, rates, rng }
    }

    /// Start from a state drawn from the stationary distribution.
    pub fn stationary(params: MarkovParams, levels: RateLevels, mut rng: R) -> Self {
        let pi = stationary_distribution(&params);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut initial = ChannelState::LL;
        for st in ChannelState::ALL {
            acc += pi[st.index()];
            if u < acc {
                initial = st;
                break;
            }
        }
        Self::new(params, levels, initial, rng)
    }

    pub fn state(&self) -> ChannelState {
        self.state
    }

    /// Gbps for (link 1, link 2).
    pub fn rates(&self) -> (f64, f64) {
        self.rates
    }

    pub fn step(&mut self) -> ChannelState {
        self.state = step_state(self.state, &self.params, &mut self.rng);
        self.rates = sample_bandwidth(self.state, &self.levels, &mut self.rng);
        self.state
    }

    /// `steps` records starting at t = 0, one per channel step.
    pub fn generate_trace(&mut self, steps: usize) -> Vec<TraceRecord> {
        let dt = self.params.step.as_secs_f64();
        let mut out = Vec::with_capacity(steps);
        for i in 0..steps {
            if i > 0 {
                self.step();
            }
            out.push(TraceRecord { t_s: i as f64 * dt, rate1_gbps: self.rates.0, rate2_gbps: self.rates.1 });
        }
        out
    }
}

/// Indicator correlation measured on `steps` simulated transitions.
pub fn measure_indicator_correlation<R: Rng>(params: &MarkovParams, steps: usize, rng: &mut R) -> f64 {
    let mut st = ChannelState::HH;
    let (mut x, mut y) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    for _ in 0..steps {
        st = step_state(st, params, rng);
        let (a, b) = st.levels();
        x.push(if a == Level::High { 1.0 } else { 0.0 });
        y.push(if b == Level::High { 1.0 } else { 0.0 });
    }
    pearson(&x, &y)
}

/// Pearson correlation of sampled link rates on `steps` simulated transitions.
pub fn measure_bandwidth_correlation<R: Rng>(
    params: &MarkovParams,
    levels: &RateLevels,
    steps: usize,
    rng: &mut R,
) -> f64 {
    let mut st = ChannelState::HH;
    let (mut x, mut y) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    for _ in 0..steps {
        st = step_state(st, params, rng);
        let (a, b) = sample_bandwidth(st, levels, rng);
        x.push(a);
        y.push(b);
    }
    pearson(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(p: f64, q: f64) -> MarkovParams {
        MarkovParams::new(p, q, SimTime::from_millis(100)).unwrap()
    }

    #[test]
    fn transition_examples() {
        assert_eq!(transition_prob(ChannelState::HH, ChannelState::HH, &params(0.0, 1.0)), 1.0);
        for a in ChannelState::ALL {
            for b in ChannelState::ALL {
                assert_eq!(transition_prob(a, b, &params(0.5, 0.5)), 0.25);
            }
        }
        let v = transition_prob(ChannelState::HH, ChannelState::HL, &params(0.2, 0.7));
        assert!((v - 0.24).abs() < 1e-12);
    }

    #[test]
    fn matrix_matches_reference_rows() {
        let (p, q) = (0.3, 0.8);
        let m = transition_matrix(&params(p, q));
        use ChannelState::*;
        let cases: [(ChannelState, ChannelState, f64); 16] = [
            (HH, HL, (1.0 - p) * (1.0 - q)),
            (HL, HL, (1.0 - p) * (1.0 - q)),
            (LH, LH, (1.0 - p) * (1.0 - q)),
            (LL, LH, (1.0 - p) * (1.0 - q)),
            (LH, HL, p * (1.0 - q)),
            (LL, HL, p * (1.0 - q)),
            (HH, LH, p * (1.0 - q)),
            (HL, LH, p * (1.0 - q)),
            (HH, HH, (1.0 - p) * q),
            (HL, HH, (1.0 - p) * q),
            (LH, LL, (1.0 - p) * q),
            (LL, LL, (1.0 - p) * q),
            (LH, HH, p * q),
            (LL, HH, p * q),
            (HH, LL, p * q),
            (HL, LL, p * q),
        ];
        for (a, b, want) in cases {
            assert!((m[a.index()][b.index()] - want).abs() < 1e-15, "{a:?}->{b:?}");
        }
    }

    #[test]
    fn frozen_chain_stays_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = ChannelState::HH;
        for _ in 0..1000 {
            st = step_state(st, &params(0.0, 1.0), &mut rng);
            assert_eq!(st, ChannelState::HH);
        }
    }

    #[test]
    fn degenerate_gaussian_returns_means() {
        let levels = RateLevels::default().zero_spread();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(sample_bandwidth(ChannelState::HH, &levels, &mut rng), (10.0, 10.0));
        assert_eq!(sample_bandwidth(ChannelState::HL, &levels, &mut rng), (10.0, 3.0));
    }

    #[test]
    fn low_state_sample_mean() {
        let levels = RateLevels::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let (a, b) = sample_bandwidth(ChannelState::LL, &levels, &mut rng);
            s1 += a;
            s2 += b;
        }
        assert!((s1 / n as f64 - 3.0).abs() < 0.03);
        assert!((s2 / n as f64 - 3.0).abs() < 0.03);
    }

    #[test]
    fn variance_reading_takes_square_root() {
        let levels = RateLevels { spread_kind: SpreadKind::Variance, ..RateLevels::default() };
        assert!((levels.std_dev(Level::Low) - 0.3f64.sqrt()).abs() < 1e-15);
        assert_eq!(RateLevels::default().std_dev(Level::High), 1.0);
    }

    #[test]
    fn correlation_closed_form() {
        assert_eq!(state_correlation(&params(0.3, 0.5)), 0.0);
        assert_eq!(state_correlation(&params(0.9, 1.0)), 1.0);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(MarkovParams::new(1.5, 0.5, SimTime::from_millis(1)).is_err());
        assert!(MarkovParams::new(0.5, -0.1, SimTime::from_millis(1)).is_err());
        assert!(MarkovParams::new(0.5, 0.5, SimTime::ZERO).is_err());
        let bad = RateLevels { mean_low: 0.0, ..RateLevels::default() };
        assert!(bad.validate().is_err());
    }

    use proptest::{prop_assert, prop_assert_eq, proptest};

    proptest! {
        #[test]
        fn rows_sum_to_one(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let m = transition_matrix(&params(p, q));
            for row in m {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn correlation_monotone_in_q(p in 0.0f64..=1.0, p2 in 0.0f64..=1.0, q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0) {
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(state_correlation(&params(p, lo)) <= state_correlation(&params(p2, hi)));
            prop_assert_eq!(state_correlation(&params(p, q1)), state_correlation(&params(p2, q1)));
        }
    }
}
