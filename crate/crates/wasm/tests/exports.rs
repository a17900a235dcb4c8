use tnqaml_wasm::{benchmark_report, kl_sweep, sample_histogram};

#[test]
fn sweep_starts_near_zero_and_rises() {
    let v: serde_json::Value = serde_json::from_str(&kl_sweep("8,18,5", 0.04, 4, 0.0).unwrap()).unwrap();
    let kl: Vec<f64> = v.as_array().unwrap().iter().map(|p| p["kl"].as_f64().unwrap()).collect();
    assert_eq!(kl.len(), 5);
    assert!(kl[0] < 1e-3, "{kl:?}");
    assert!(kl.windows(2).all(|w| w[1] >= w[0] - 1e-12));
}

#[test]
fn histogram_is_normalized() {
    let v: serde_json::Value = serde_json::from_str(&sample_histogram("1,1", 0.0, 0.0, 4000, 3).unwrap()).unwrap();
    let s: f64 = v["sampled"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((s - 1.0).abs() < 1e-12);
    assert!(v["kl"].as_f64().unwrap() < 0.01);
}

#[test]
fn report_has_pairs() {
    let v: serde_json::Value = serde_json::from_str(&benchmark_report("8,18,5", 0.0, 0.0, 2000, 1).unwrap()).unwrap();
    assert!(!v["pairs"].as_array().unwrap().is_empty());
}

#[test]
fn bad_counts_rejected() {
    assert!(kl_sweep("8,x", 0.01, 2, 0.0).is_err());
    assert!(kl_sweep("8", 0.01, 2, 0.0).is_err());
    assert!(sample_histogram("0,0", 0.0, 0.0, 10, 0).is_err());
}
