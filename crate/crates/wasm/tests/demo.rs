use gridflex_wasm::{envelope_json, schedule_json, schemes_json};

#[test]
fn envelope_reports_both_classes() {
    let v = envelope_json("tiny", 2, 8, 4.0).unwrap();
    assert_eq!(v["slow"].as_array().unwrap().len(), 8);
    assert_eq!(v["contained"], true);
    assert_eq!(v["failed"], 0);
    // The tiny PV ramps slower than the threshold: no fast flexibility.
    assert_eq!(v["fast_area"].as_f64().unwrap(), 0.0);
    let v = envelope_json("tiny", 2, 8, 1.0).unwrap();
    assert!(v["fast_area"].as_f64().unwrap() > 0.0);
}

#[test]
fn schedule_series_cover_horizon() {
    let v = schedule_json("tiny", 1.0, 100.0, 100.0).unwrap();
    assert_eq!(v["import_kw"].as_array().unwrap().len(), 4);
    assert_eq!(v["terms"].as_array().unwrap().len(), 5);
    assert!(v["curtailment_kw"].as_array().unwrap().iter().all(|c| c.as_f64().unwrap() >= -1e-6));
}

#[test]
fn schemes_and_errors() {
    let v = schemes_json("tiny", 2, 8).unwrap();
    assert_eq!(v["tso_leader"]["slow"].as_array().unwrap().len(), 8);
    assert_eq!(v["dso_leader"]["slow"].as_array().unwrap().len(), 8);
    assert!(envelope_json("nowhere", 0, 8, 4.0).unwrap_err().contains("nowhere"));
    assert!(envelope_json("tiny", 99, 8, 4.0).unwrap_err().contains("99"));
}
