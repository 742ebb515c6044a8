use cotag::harness::{
    expand_grid, parse_records, records_to_csv, run_grid, run_scenario, ChannelKind, GridAxes, ScenarioConfig, Scheme,
    TransportKind,
};

fn constant_links(rate: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig { duration_s: 0.5, transport: TransportKind::OpenLoop, ..ScenarioConfig::default() };
    cfg.channel.kind = ChannelKind::Constant;
    cfg.channel.rate1_gbps = rate;
    cfg.channel.rate2_gbps = rate;
    cfg
}

#[test]
fn cotag_carries_offered_load_over_ample_links() {
    let mut cfg = constant_links(10.0);
    cfg.traffic.base_rate_gbps = 0.6;
    cfg.traffic.burst_rate_gbps = 0.6;
    cfg.traffic.burst_start_s = 0.05;
    cfg.traffic.burst_duration_s = 0.4;
    let out = run_scenario(&cfg).unwrap();
    let thr = out.record.throughput_gbps;
    assert!((thr - 6.0).abs() <= 0.6, "throughput {thr}");
    assert_eq!(out.violations.total(), 0);
}

#[test]
fn zero_duration_gives_an_empty_record() {
    let cfg = ScenarioConfig { duration_s: 0.0, ..ScenarioConfig::default() };
    let rec = run_scenario(&cfg).unwrap().record;
    assert_eq!(rec.injected_bytes, 0);
    assert_eq!(rec.delivered_bytes, 0);
    assert_eq!(rec.throughput_gbps, 0.0);
}

#[test]
fn small_grid_round_trips_through_csv() {
    let base = ScenarioConfig { duration_s: 0.05, ..ScenarioConfig::default() };
    let axes = GridAxes { latencies_ms: vec![0.0, 1.0], repeats: 1, ..GridAxes::default() };
    let records = run_grid(&base, &axes).unwrap();
    assert_eq!(records.len(), 2 * 2 * 3 * 3);
    assert_eq!(expand_grid(&base, &axes).unwrap().len(), records.len());
    let csv = records_to_csv(&records);
    assert_eq!(csv.lines().count(), records.len() + 1);
    let back = parse_records(csv.as_bytes(), "grid").unwrap();
    assert_eq!(back.len(), records.len());
    assert!(back.iter().zip(&records).all(|(a, b)| a.same_as(b)));
}

#[test]
fn schemes_differ_on_a_lossy_channel() {
    let base = ScenarioConfig { duration_s: 0.3, per: 1e-3, ..ScenarioConfig::default() };
    let rows: Vec<f64> = Scheme::ALL
        .iter()
        .map(|&scheme| run_scenario(&ScenarioConfig { scheme, ..base.clone() }).unwrap().record.delivered_bytes as f64)
        .collect();
    assert!(rows.iter().all(|&b| b > 0.0), "{rows:?}");
    assert!(rows.windows(2).any(|w| w[0] != w[1]), "{rows:?}");
}

#[test]
fn shipped_scenario_file_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/correlated.toml");
    let cfg = ScenarioConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.corr_target, Some(0.34));
    assert_eq!(cfg.latency_ms, 1.0);
}
