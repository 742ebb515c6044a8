use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::Scheme;

pub const CSV_COLUMNS: [&str; 15] = [
    "scenario",
    "scheme",
    "per",
    "latency_ms",
    "corr_target",
    "corr_measured",
    "p",
    "q",
    "T_ms",
    "seed",
    "throughput_gbps",
    "latency_5gb_s",
    "decode_ratio",
    "injected_bytes",
    "delivered_bytes",
];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: header does not match the metrics columns")]
    Header { path: String },
}

/// One simulated run, as written to the results CSV. Undefined values are NaN
/// and an unreached transfer target is infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub scheme: Scheme,
    pub per: f64,
    pub latency_ms: f64,
    pub corr_target: f64,
    pub corr_measured: f64,
    pub p: f64,
    pub q: f64,
    #[serde(rename = "T_ms")]
    pub t_ms: f64,
    pub seed: u64,
    pub throughput_gbps: f64,
    pub latency_5gb_s: f64,
    pub decode_ratio: f64,
    pub injected_bytes: u64,
    pub delivered_bytes: u64,
}

fn fixed(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.decimals$}")
    }
}

impl MetricsRecord {
    pub fn fields(&self) -> [String; 15] {
        [
            self.scenario.clone(),
            self.scheme.as_str().into(),
            fixed(self.per, 6),
            fixed(self.latency_ms, 3),
            fixed(self.corr_target, 4),
            fixed(self.corr_measured, 4),
            fixed(self.p, 4),
            fixed(self.q, 4),
            fixed(self.t_ms, 3),
            self.seed.to_string(),
            fixed(self.throughput_gbps, 4),
            fixed(self.latency_5gb_s, 6),
            fixed(self.decode_ratio, 4),
            self.injected_bytes.to_string(),
            self.delivered_bytes.to_string(),
        ]
    }

    /// Same record after a trip through the CSV text format.
    pub fn rounded(&self) -> MetricsRecord {
        let f = self.fields();
        let num = |i: usize| f[i].parse::<f64>().expect("formatted number parses");
        MetricsRecord {
            per: num(2),
            latency_ms: num(3),
            corr_target: num(4),
            corr_measured: num(5),
            p: num(6),
            q: num(7),
            t_ms: num(8),
            throughput_gbps: num(10),
            latency_5gb_s: num(11),
            decode_ratio: num(12),
            ..self.clone()
        }
    }

    /// Field-wise equality that treats NaN as equal to NaN.
    pub fn same_as(&self, other: &MetricsRecord) -> bool {
        self.fields() == other.fields()
    }
}

pub fn write_records<W: Write>(writer: W, records: &[MetricsRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn records_to_csv(records: &[MetricsRecord]) -> String {
    let mut buf = Vec::new();
    write_records(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<(), CsvError> {
    let name = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|source| CsvError::Io { path: name.clone(), source })?;
    write_records(std::io::BufWriter::new(file), records).map_err(|source| CsvError::Csv { path: name, source })
}

pub fn parse_records<R: Read>(reader: R, origin: &str) -> Result<Vec<MetricsRecord>, CsvError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|source| CsvError::Csv { path: origin.into(), source })?;
    if header.iter().ne(CSV_COLUMNS) {
        return Err(CsvError::Header { path: origin.into() });
    }
    rdr.deserialize()
        .collect::<Result<Vec<MetricsRecord>, _>>()
        .map_err(|source| CsvError::Csv { path: origin.into(), source })
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>, CsvError> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CsvError::Io { path: name.clone(), source })?;
    parse_records(file, &name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: u64) -> MetricsRecord {
        MetricsRecord {
            scenario: "grid/c-0.34/per0.0001/lat1/r0".into(),
            scheme: Scheme::SinglePath,
            per: 1e-4,
            latency_ms: 1.0,
            corr_target: -0.34,
            corr_measured: -0.3412,
            p: 0.5,
            q: 0.33,
            t_ms: 2.0,
            seed,
            throughput_gbps: 3.21,
            latency_5gb_s: f64::INFINITY,
            decode_ratio: f64::NAN,
            injected_bytes: 1 << 33,
            delivered_bytes: 12345,
        }
    }

    #[test]
    fn empty_list_is_header_only() {
        assert_eq!(records_to_csv(&[]), format!("{}\n", CSV_COLUMNS.join(",")));
    }

    #[test]
    fn round_trip_recovers_every_field() {
        let recs: Vec<_> = (0..36).map(sample).collect();
        let text = records_to_csv(&recs);
        assert_eq!(text.lines().count(), 37);
        let back = parse_records(text.as_bytes(), "mem").unwrap();
        assert_eq!(back.len(), 36);
        for (a, b) in recs.iter().zip(&back) {
            assert!(a.same_as(b));
            assert_eq!(b.scheme, Scheme::SinglePath);
            assert!(b.decode_ratio.is_nan());
            assert_eq!(b.latency_5gb_s, f64::INFINITY);
            assert_eq!(b.injected_bytes, 1 << 33);
        }
        assert_eq!(records_to_csv(&back), text);
    }

    #[test]
    fn decimals_are_fixed() {
        let line = records_to_csv(&[sample(9)]).lines().nth(1).unwrap().to_string();
        assert_eq!(
            line,
            "grid/c-0.34/per0.0001/lat1/r0,single-path,0.000100,1.000,-0.3400,-0.3412,0.5000,0.3300,2.000,9,3.2100,inf,nan,8589934592,12345"
        );
    }

    #[test]
    fn wrong_header_is_rejected() {
        let err = parse_records("a,b\n1,2\n".as_bytes(), "bad.csv").unwrap_err();
        assert!(matches!(err, CsvError::Header { .. }));
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = write_csv(Path::new("/nonexistent-dir/out.csv"), &[]).unwrap_err();
        assert!(err.to_string().starts_with("/nonexistent-dir/out.csv"));
    }
}
