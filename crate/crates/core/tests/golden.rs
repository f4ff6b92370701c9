//! Frozen outputs. Set UPDATE_GOLDEN=1 to rewrite the fixtures after an
//! intended change in generation or numerics.

use std::path::PathBuf;

use twohop_ia::channel::{BlockStreams, NoiseConfig};
use twohop_ia::experiment::{run_sweep, write_csv, SlopeSummary, SweepConfig};
use twohop_ia::rate::monte_carlo_rate;
use twohop_ia::scheme::BlockTrace;
use twohop_ia::{SchemeId, SimParams};

const SEED: u64 = 20_240_601;

fn check(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let frozen = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, frozen, "{name} changed; regenerate only on purpose");
}

#[test]
fn golden_traces() {
    let params = SimParams::from_db(20.0, NoiseConfig::unit());
    for scheme in SchemeId::ALL {
        let t = scheme.run_block(BlockStreams::new(SEED, 0), &params);
        assert!(!t.is_outage());
        let json = t.to_json();
        assert_eq!(BlockTrace::from_json(&json).unwrap(), t);
        check(&format!("trace_{scheme}.json"), &(json + "\n"));
    }
}

#[test]
fn golden_single_trial_rates() {
    let base = SimParams::new(1.0, NoiseConfig::unit());
    let lines: String = SchemeId::ALL
        .iter()
        .map(|&s| {
            let p = monte_carlo_rate(s, 30.0, &base, 1, SEED, 1).unwrap();
            assert_eq!(p.stderr, 0.0);
            format!("{s} {:?}\n", p.sum_rate)
        })
        .collect();
    check("single_trial_rate.txt", &lines);
}

#[test]
fn golden_sweep_outputs() {
    let cfg = SweepConfig::new(SchemeId::ALL.to_vec(), vec![10.0, 20.0, 30.0], 50, SEED);
    let sweep = run_sweep(&cfg, 1).unwrap();
    check("sweep_small.csv", &write_csv(&sweep.meta, &sweep.curves));
    check("sweep_small.json", &(SlopeSummary::new(&sweep.meta, &sweep.curves).unwrap().to_json() + "\n"));
}
