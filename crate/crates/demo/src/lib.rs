//! Browser bindings: a rate curve, a decoded-symbol scatter and a
//! conditioning histogram. The plain functions return JSON or flat arrays so
//! they can be tested natively; the `#[wasm_bindgen]` wrappers only adapt errors.

use serde::Serialize;
use twohop_ia::channel::{BlockStreams, NoiseConfig};
use twohop_ia::rate::{fit_dof_slope, log2_pairs, monte_carlo_rate, RatePoint};
use twohop_ia::{SchemeId, SimParams};
use wasm_bindgen::prelude::*;

/// Keeps a page responsive; larger requests are refused.
pub const MAX_WORK: u64 = 200_000;

#[derive(Serialize)]
struct Curve {
    scheme: SchemeId,
    points: Vec<RatePoint>,
    slope: Option<f64>,
    intercept: Option<f64>,
}

fn scheme(id: &str) -> Result<SchemeId, String> {
    id.parse()
}

fn budget(units: u64) -> Result<(), String> {
    if units == 0 {
        return Err("nothing to run".into());
    }
    if units > MAX_WORK {
        return Err(format!("{units} block runs requested, the demo allows {MAX_WORK}"));
    }
    Ok(())
}

/// Mean sum rate from `p_lo` to `p_hi` dB in `step` dB increments, as JSON.
pub fn rate_curve_json(id: &str, p_lo: f64, p_hi: f64, step: f64, trials: u32, seed: u64) -> Result<String, String> {
    let scheme = scheme(id)?;
    if !(step > 0.0) || !(p_hi >= p_lo) || !p_lo.is_finite() || !p_hi.is_finite() {
        return Err("need p_lo <= p_hi and a positive step".into());
    }
    let n = ((p_hi - p_lo) / step + 1e-9).floor() as u64 + 1;
    budget(n * trials as u64)?;
    let base = SimParams::new(1.0, NoiseConfig::unit());
    let points = (0..n)
        .map(|i| monte_carlo_rate(scheme, p_lo + step * i as f64, &base, trials as u64, seed, 1))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let fit = fit_dof_slope(&log2_pairs(&points)).ok();
    let curve = Curve {
        scheme,
        points,
        slope: fit.map(|f| f.slope),
        intercept: fit.map(|f| f.intercept),
    };
    Ok(serde_json::to_string(&curve).expect("curve serializes"))
}

/// Destination estimates against the true symbols, both scaled to unit
/// symbol power: `[true_re, true_im, est_re, est_im]` per decoded symbol.
pub fn decoded_scatter(id: &str, p_db: f64, blocks: u32, seed: u64) -> Result<Vec<f64>, String> {
    let scheme = scheme(id)?;
    budget(blocks as u64)?;
    let params = SimParams::from_db(p_db, NoiseConfig::unit());
    let mut out = Vec::with_capacity(blocks as usize * 16);
    for b in 0..blocks as u64 {
        let t = scheme.run_block(BlockStreams::new(seed, b), &params);
        let scale = 1.0 / t.gains.symbol_power().sqrt();
        for dest in 1..=2 {
            let Ok(est) = scheme.decode(&t, dest) else { continue };
            let truth = t.desired_symbols(dest);
            for (x, y) in truth.as_slice().iter().zip(est.as_slice()) {
                out.extend([x.re * scale, x.im * scale, y.re * scale, y.im * scale]);
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct Histogram {
    label: String,
    counts: Vec<u64>,
    /// Draws at or above the top edge.
    overflow: u64,
    max_log10: f64,
}

#[derive(Serialize)]
struct Histograms {
    lo: f64,
    hi: f64,
    blocks: u32,
    stacks: Vec<Histogram>,
}

/// Histogram of `log10` condition numbers of every full-rank claim a scheme
/// relies on, over `blocks` fresh channel draws, as JSON.
pub fn condition_histogram_json(id: &str, blocks: u32, bins: u32, seed: u64) -> Result<String, String> {
    let scheme = scheme(id)?;
    budget(blocks as u64)?;
    if bins == 0 || bins > 200 {
        return Err("bins must be in 1..=200".into());
    }
    let (lo, hi) = (0.0, 8.0);
    let params = SimParams::new(1.0, NoiseConfig::off());
    let mut stacks: Vec<Histogram> = Vec::new();
    for b in 0..blocks as u64 {
        let t = scheme.run_block(BlockStreams::new(seed, b), &params);
        for c in &t.conditions {
            let h = match stacks.iter().position(|h| h.label == c.label) {
                Some(i) => &mut stacks[i],
                None => {
                    stacks.push(Histogram {
                        label: c.label.clone(),
                        counts: vec![0; bins as usize],
                        overflow: 0,
                        max_log10: f64::NEG_INFINITY,
                    });
                    stacks.last_mut().unwrap()
                }
            };
            let v = c.value.max(1.0).log10();
            h.max_log10 = h.max_log10.max(v);
            if v >= hi {
                h.overflow += 1;
            } else {
                let k = ((v - lo) / (hi - lo) * bins as f64) as usize;
                h.counts[k.min(bins as usize - 1)] += 1;
            }
        }
    }
    Ok(serde_json::to_string(&Histograms { lo, hi, blocks, stacks }).expect("histogram serializes"))
}

#[wasm_bindgen(js_name = rateCurve)]
pub fn rate_curve(scheme: &str, p_lo: f64, p_hi: f64, step: f64, trials: u32, seed: u64) -> Result<String, JsError> {
    rate_curve_json(scheme, p_lo, p_hi, step, trials, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = decodedScatter)]
pub fn decoded_scatter_js(scheme: &str, p_db: f64, blocks: u32, seed: u64) -> Result<Vec<f64>, JsError> {
    decoded_scatter(scheme, p_db, blocks, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = conditionHistogram)]
pub fn condition_histogram(scheme: &str, blocks: u32, bins: u32, seed: u64) -> Result<String, JsError> {
    condition_histogram_json(scheme, blocks, bins, seed).map_err(|e| JsError::new(&e))
}
