use twohop_ia_demo::{condition_histogram_json, decoded_scatter, rate_curve_json, MAX_WORK};

#[test]
fn rate_curve_reports_points_and_slope() {
    let v: serde_json::Value = serde_json::from_str(&rate_curve_json("tdma", 0.0, 30.0, 10.0, 50, 1).unwrap()).unwrap();
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 4);
    assert_eq!(pts[3]["p_db"], 30.0);
    assert!(v["slope"].as_f64().unwrap() > 0.5);
    let short: serde_json::Value = serde_json::from_str(&rate_curve_json("tdma", 0.0, 10.0, 5.0, 5, 1).unwrap()).unwrap();
    assert!(short["slope"].is_null());
}

#[test]
fn scatter_pairs_truth_with_estimates() {
    let pts = decoded_scatter("dcsis", 60.0, 20, 3).unwrap();
    assert_eq!(pts.len(), 20 * 4 * 4);
    for q in pts.chunks(4) {
        assert!((q[0] - q[2]).hypot(q[1] - q[3]) < 0.5);
    }
    // tdma decodes three symbols per block
    assert_eq!(decoded_scatter("tdma", 20.0, 10, 3).unwrap().len(), 10 * 3 * 4);
}

#[test]
fn histogram_counts_every_draw() {
    let v: serde_json::Value = serde_json::from_str(&condition_histogram_json("lsf", 300, 16, 4).unwrap()).unwrap();
    let stacks = v["stacks"].as_array().unwrap();
    assert_eq!(stacks.len(), 4);
    for s in stacks {
        let total: u64 = s["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
        assert_eq!(total + s["overflow"].as_u64().unwrap(), 300);
    }
}

#[test]
fn bad_requests_are_refused() {
    assert!(rate_curve_json("nope", 0.0, 10.0, 5.0, 5, 1).is_err());
    assert!(rate_curve_json("dcsis", 10.0, 0.0, 5.0, 5, 1).is_err());
    assert!(rate_curve_json("dcsis", 0.0, 10.0, 0.0, 5, 1).is_err());
    assert!(decoded_scatter("lsf", 20.0, (MAX_WORK + 1) as u32, 1).is_err());
    assert!(decoded_scatter("lsf", 20.0, 0, 1).is_err());
    assert!(condition_histogram_json("dcsis", 10, 0, 1).is_err());
}
