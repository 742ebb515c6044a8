use std::io::{Read, Write};
use std::path::Path;

use super::{ChannelError, Level, MarkovParams, RateLevels, SpreadKind};
use crate::simcore::SimTime;

pub const TRACE_HEADER: [&str; 3] = ["t_s", "rate1_gbps", "rate2_gbps"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t_s: f64,
    pub rate1_gbps: f64,
    pub rate2_gbps: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TraceOptions {
    /// Accept `t_s,rate_gbps` files and use the single rate for both links.
    pub duplicate_single_link: bool,
}

pub fn load_trace(path: impl AsRef<Path>, opts: TraceOptions) -> Result<Vec<TraceRecord>, ChannelError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|source| ChannelError::Io { path: path.display().to_string(), source })?;
    parse_trace(file, opts)
}

pub fn parse_trace<R: Read>(reader: R, opts: TraceOptions) -> Result<Vec<TraceRecord>, ChannelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| ChannelError::Parse { line: 1, msg: e.to_string() })?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let single = match cols.as_slice() {
        ["t_s", "rate1_gbps", "rate2_gbps"] => false,
        [_, _] if opts.duplicate_single_link => true,
        _ => {
            return Err(ChannelError::Parse {
                line: 1,
                msg: format!("expected header `{}`, found `{}`", TRACE_HEADER.join(","), cols.join(",")),
            })
        }
    };

    let mut out: Vec<TraceRecord> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| ChannelError::Parse { line, msg: e.to_string() })?;
        let want = if single { 2 } else { 3 };
        if row.len() != want {
            return Err(ChannelError::Parse { line, msg: format!("expected {want} fields, found {}", row.len()) });
        }
        let field = |j: usize| -> Result<f64, ChannelError> {
            let v: f64 = row[j]
                .parse()
                .map_err(|_| ChannelError::Parse { line, msg: format!("not a number: `{}`", &row[j]) })?;
            if !v.is_finite() {
                return Err(ChannelError::Parse { line, msg: format!("non-finite value `{}`", &row[j]) });
            }
            Ok(v)
        };
        let t_s = field(0)?;
        let rate1_gbps = field(1)?;
        let rate2_gbps = if single { rate1_gbps } else { field(2)? };
        if rate1_gbps < 0.0 || rate2_gbps < 0.0 {
            return Err(ChannelError::Parse { line, msg: "negative rate".into() });
        }
        if let Some(prev) = out.last() {
            if t_s <= prev.t_s {
                return Err(ChannelError::Parse {
                    line,
                    msg: format!("timestamp {t_s} not after previous {}", prev.t_s),
                });
            }
        }
        out.push(TraceRecord { t_s, rate1_gbps, rate2_gbps });
    }
    Ok(out)
}

pub fn write_trace<W: Write>(writer: W, records: &[TraceRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        // `{}` on f64 prints the shortest string that parses back to the same value.
        w.write_record([r.t_s.to_string(), r.rate1_gbps.to_string(), r.rate2_gbps.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(path: impl AsRef<Path>, records: &[TraceRecord]) -> Result<(), ChannelError> {
    let path = path.as_ref();
    let io_err = |source| ChannelError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_trace(file, records).map_err(|e| ChannelError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })
}

/// Output of [`calibrate_from_trace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub params: MarkovParams,
    pub levels: RateLevels,
    /// High/Low boundary used for each link.
    pub medians: (f64, f64),
    /// Pearson correlation of the quantized indicators.
    pub indicator_correlation: f64,
    /// Pearson correlation of the raw rates.
    pub rate_correlation: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fit the two-parameter chain and per-level Gaussians to a measured trace.
///
/// Each link is quantized at its own median (at or above is High). `p` is the
/// flip frequency of link 1; `q` is how often link 2's level equals link 1's
/// over every post-initial sample. Level statistics pool both links. The step
/// is the mean sample spacing.
pub fn calibrate_from_trace(trace: &[TraceRecord]) -> Result<Calibration, ChannelError> {
    if trace.len() < 2 {
        return Err(ChannelError::TooShort { need: 2, got: trace.len() });
    }
    let mut r1: Vec<f64> = trace.iter().map(|r| r.rate1_gbps).collect();
    let mut r2: Vec<f64> = trace.iter().map(|r| r.rate2_gbps).collect();
    let m1 = median(&mut r1);
    let m2 = median(&mut r2);
    let level = |v: f64, m: f64| if v >= m { Level::High } else { Level::Low };
    let l1: Vec<Level> = trace.iter().map(|r| level(r.rate1_gbps, m1)).collect();
    let l2: Vec<Level> = trace.iter().map(|r| level(r.rate2_gbps, m2)).collect();

    let transitions = (trace.len() - 1) as f64;
    let flips = l1.windows(2).filter(|w| w[0] != w[1]).count() as f64;
    let matches = l1.iter().zip(&l2).skip(1).filter(|(a, b)| a == b).count() as f64;

    let (mut high, mut low) = (Vec::new(), Vec::new());
    for (r, (a, b)) in trace.iter().zip(l1.iter().zip(&l2)) {
        for (rate, lvl) in [(r.rate1_gbps, *a), (r.rate2_gbps, *b)] {
            match lvl {
                Level::High => high.push(rate),
                Level::Low => low.push(rate),
            }
        }
    }
    let stats = |xs: &[f64]| -> Option<(f64, f64)> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    };
    // A single-level trace (e.g. constant rate) reports the same Gaussian for both levels.
    let (mean_high, sd_high, mean_low, sd_low) = match (stats(&high), stats(&low)) {
        (Some(h), Some(l)) => (h.0, h.1, l.0, l.1),
        (Some(h), None) => (h.0, h.1, h.0, h.1),
        (None, Some(l)) => (l.0, l.1, l.0, l.1),
        (None, None) => unreachable!("trace is non-empty"),
    };

    let span = trace.last().unwrap().t_s - trace[0].t_s;
    let step = SimTime::from_secs_f64(span / transitions);
    if step == SimTime::ZERO {
        return Err(ChannelError::InvalidParams("trace timestamps too dense for ns resolution".into()));
    }
    let ind = |ls: &[Level]| ls.iter().map(|l| if *l == Level::High { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let rates1: Vec<f64> = trace.iter().map(|r| r.rate1_gbps).collect();
    let rates2: Vec<f64> = trace.iter().map(|r| r.rate2_gbps).collect();

    Ok(Calibration {
        params: MarkovParams { p: flips / transitions, q: matches / transitions, step },
        levels: RateLevels {
            mean_low,
            mean_high,
            spread_low: sd_low,
            spread_high: sd_high,
            spread_kind: SpreadKind::StdDev,
        },
        medians: (m1, m2),
        indicator_correlation: super::pearson(&ind(&l1), &ind(&l2)),
        rate_correlation: super::pearson(&rates1, &rates2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelProcess;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const WELL_FORMED: &str = "t_s,rate1_gbps,rate2_gbps\n0.0,3.1,9.8\n0.1,2.9,10.2\n0.2,10.0,3.0\n";

    #[test]
    fn loads_well_formed_rows() {
        let recs = parse_trace(WELL_FORMED.as_bytes(), TraceOptions::default()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[2], TraceRecord { t_s: 0.2, rate1_gbps: 10.0, rate2_gbps: 3.0 });
    }

    #[test]
    fn negative_rate_names_the_row() {
        let text = "t_s,rate1_gbps,rate2_gbps\n0.0,3,3\n0.1,-1,3\n";
        match parse_trace(text.as_bytes(), TraceOptions::default()) {
            Err(ChannelError::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("negative"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_and_malformed_rows_fail() {
        let text = "t_s,rate1_gbps,rate2_gbps\n0.1,3,3\n0.1,3,3\n";
        assert!(matches!(
            parse_trace(text.as_bytes(), TraceOptions::default()),
            Err(ChannelError::Parse { line: 3, .. })
        ));
        let text = "t_s,rate1_gbps,rate2_gbps\n0.1,abc,3\n";
        assert!(matches!(
            parse_trace(text.as_bytes(), TraceOptions::default()),
            Err(ChannelError::Parse { line: 2, .. })
        ));
        let text = "time,a,b\n0.1,1,3\n";
        assert!(matches!(
            parse_trace(text.as_bytes(), TraceOptions::default()),
            Err(ChannelError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn single_link_trace_duplicates_column() {
        let text = "t_s,rate_gbps\n0,4.5\n1,5.5\n";
        assert!(parse_trace(text.as_bytes(), TraceOptions::default()).is_err());
        let recs = parse_trace(text.as_bytes(), TraceOptions { duplicate_single_link: true }).unwrap();
        assert_eq!(recs[1].rate1_gbps, recs[1].rate2_gbps);
    }

    #[test]
    fn save_load_round_trip() {
        let mut proc = ChannelProcess::stationary(
            MarkovParams::default(),
            RateLevels::default(),
            ChaCha8Rng::seed_from_u64(4),
        );
        let recs = proc.generate_trace(200);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        save_trace(&path, &recs).unwrap();
        assert_eq!(load_trace(&path, TraceOptions::default()).unwrap(), recs);
    }

    #[test]
    fn constant_trace_has_no_flips() {
        let recs: Vec<TraceRecord> =
            (0..50).map(|i| TraceRecord { t_s: i as f64 * 0.1, rate1_gbps: 5.0, rate2_gbps: 5.0 }).collect();
        let cal = calibrate_from_trace(&recs).unwrap();
        assert_eq!(cal.params.p, 0.0);
        assert_eq!(cal.levels.mean_low, cal.levels.mean_high);
    }

    #[test]
    fn lockstep_alternation_gives_p_and_q_one() {
        let recs: Vec<TraceRecord> = (0..100)
            .map(|i| {
                let r = if i % 2 == 0 { 10.0 } else { 3.0 };
                TraceRecord { t_s: i as f64 * 0.1, rate1_gbps: r, rate2_gbps: r }
            })
            .collect();
        let cal = calibrate_from_trace(&recs).unwrap();
        assert_eq!(cal.params.p, 1.0);
        assert_eq!(cal.params.q, 1.0);
        assert_eq!(cal.params.step, SimTime::from_millis(100));
        assert_eq!((cal.levels.mean_low, cal.levels.mean_high), (3.0, 10.0));
    }

    #[test]
    fn short_trace_is_an_error() {
        let one = [TraceRecord { t_s: 0.0, rate1_gbps: 1.0, rate2_gbps: 1.0 }];
        assert!(matches!(calibrate_from_trace(&one), Err(ChannelError::TooShort { .. })));
        assert!(matches!(calibrate_from_trace(&[]), Err(ChannelError::TooShort { .. })));
    }

    fn recovery_error(steps: usize, seed: u64) -> f64 {
        let params = MarkovParams::new(0.3, 0.7, SimTime::from_millis(100)).unwrap();
        let mut proc = ChannelProcess::stationary(params, RateLevels::default(), ChaCha8Rng::seed_from_u64(seed));
        let cal = calibrate_from_trace(&proc.generate_trace(steps)).unwrap();
        (cal.params.p - 0.3).abs().max((cal.params.q - 0.7).abs())
    }

    #[test]
    fn estimation_error_shrinks_with_length() {
        let avg = |steps| (0..8).map(|s| recovery_error(steps, s)).sum::<f64>() / 8.0;
        let short = avg(1_000);
        let long = avg(100_000);
        assert!(long < short, "short {short}, long {long}");
        assert!(long < 0.01);
    }
}
