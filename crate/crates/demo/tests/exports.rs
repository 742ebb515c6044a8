use cotag_demo::{latency_sweep_json, markov_trace_json, replay_json};

#[test]
fn trace_json_has_one_state_per_step() {
    let v: serde_json::Value = serde_json::from_str(&markov_trace_json(0.5, 0.8, 300, 9)).unwrap();
    assert_eq!(v["states"].as_array().unwrap().len(), 300);
    assert_eq!(v["rate1_gbps"].as_array().unwrap().len(), 300);
    assert!(v["indicator_correlation"].as_f64().unwrap() > 0.3);
}

#[test]
fn balanced_walkthrough_delivers_all_six() {
    let v: serde_json::Value = serde_json::from_str(&replay_json("balanced", "cotag")).unwrap();
    assert_eq!(v["deliveries"].as_array().unwrap().len(), 6);
    assert_eq!(v["violations"], 0);
    let ap_sends = v["tx"].as_array().unwrap().iter().filter(|t| t["link"].as_u64() >= Some(2) && !t["flow"].is_null());
    assert_eq!(ap_sends.count(), 6);
}

#[test]
fn sweep_has_a_row_per_scheme_and_latency() {
    let v: serde_json::Value = serde_json::from_str(&latency_sweep_json(vec![0.0, 2.0], 0.0, 0.0, 3)).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r["throughput_gbps"].as_f64().unwrap() > 0.0));
}
