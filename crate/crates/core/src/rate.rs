//! Achievable-rate measurement.
//!
//! Every scheme is linear in (symbols, noise) once the CSI and gains of a
//! block are fixed, so a destination's processed observations can be written
//! as `y = A d + N z`, with `d` the desired symbols and `z` the twelve noise
//! injections of the block. [`extract_effective_model`] recovers `A` and `N`
//! by replaying the block with unit inputs; the Gaussian mutual information
//! of that model is the per-destination rate.
//!
//! Time accounting: each block uses each hop three times and the two hops run
//! in parallel across interleaved blocks, so the per-block sum rate is divided
//! by three channel uses.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{BlockStreams, NoiseSamples, SLOTS};
use crate::experiment::par_map;
use crate::linalg::{self, CMatrix, CVector, LinalgError};
use crate::scheme::{BlockTrace, Outage, SchemeId, SimParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error(transparent)]
    Outage(#[from] Outage),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("noiseless mode: {0}")]
    Mode(String),
    #[error("insufficient data for a slope fit: {0}")]
    Insufficient(String),
}

/// Linear observation model of one destination after its cancellation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveModel {
    /// Gains from the desired symbols to the processed observations.
    pub a: CMatrix,
    /// Map from the block's flat noise vector (see [`NoiseSamples::to_vec`]) to the observations.
    pub noise_map: CMatrix,
    /// Noise covariance in noise-power units (`N N^H`); zero in noiseless mode.
    pub k: CMatrix,
    /// Processed observations of the actual block.
    pub observations: CVector,
}

impl EffectiveModel {
    /// `|y - A d - N z| / max(|y|, 1e-300)` for the trace the model came from.
    pub fn replay_residual(&self, trace: &BlockTrace, dest: usize) -> f64 {
        let d = trace.desired_symbols(dest);
        let z = CVector::new(trace.noise_samples.to_vec());
        let predicted = self.a.mul_vec(&d);
        let noise = self.noise_map.mul_vec(&z);
        let r = self.observations.sub(&predicted).sub(&noise);
        r.norm() / self.observations.norm().max(1e-300)
    }
}

fn processed(trace: &BlockTrace, symbols: &[Complex64], noise: &NoiseSamples, dest: usize) -> Result<CVector, Outage> {
    // The original run already enforced the conditioning threshold.
    let signals = trace.scheme.replay_at(trace, f64::INFINITY, symbols, noise)?;
    Ok(trace.scheme.front_end_at(trace, f64::INFINITY, &signals, dest)?.obs)
}

/// Replays the destination pipeline: one pass per desired unit symbol (noise
/// zeroed) gives the columns of `A`, one pass per unit noise injection
/// (symbols zeroed) the columns of `N`.
pub fn extract_effective_model(trace: &BlockTrace, dest: usize) -> Result<EffectiveModel, RateError> {
    if let Some(o) = &trace.outage {
        return Err(o.clone().into());
    }
    let scheme = trace.scheme;
    let desired = scheme.desired(dest);
    let n_sym = scheme.symbols_per_block();
    let zero_symbols = vec![Complex64::new(0.0, 0.0); n_sym];
    let observations = scheme.front_end(trace, &trace.signals, dest)?.obs;
    let n_obs = observations.len();

    let mut a = CMatrix::zeros(n_obs, desired.len());
    for (col, &idx) in desired.iter().enumerate() {
        let mut s = zero_symbols.clone();
        s[idx] = Complex64::new(1.0, 0.0);
        let y = processed(trace, &s, &NoiseSamples::zero(), dest)?;
        for r in 0..n_obs {
            a[(r, col)] = y[r];
        }
    }
    let mut noise_map = CMatrix::zeros(n_obs, NoiseSamples::COUNT);
    for m in 0..NoiseSamples::COUNT {
        let y = processed(trace, &zero_symbols, &NoiseSamples::unit(m), dest)?;
        for r in 0..n_obs {
            noise_map[(r, m)] = y[r];
        }
    }
    let k = if trace.noise.enabled {
        noise_map.matmul(&noise_map.conj_transpose())
    } else {
        CMatrix::zeros(n_obs, n_obs)
    };
    Ok(EffectiveModel {
        a,
        noise_map,
        k,
        observations,
    })
}

/// `log2 det(I + (symbol_power / noise_power) A^H K^-1 A)`, evaluated by
/// whitening `A` with the Cholesky factor of `K`.
pub fn mutual_information_bits(a: &CMatrix, k: &CMatrix, symbol_power: f64, noise_power: f64) -> Result<f64, RateError> {
    if noise_power <= 0.0 {
        return Err(RateError::Mode("mutual information needs positive noise power".into()));
    }
    let l = linalg::cholesky(k)?;
    let w = linalg::forward_substitute(&l, a)?;
    let rho = Complex64::new(symbol_power / noise_power, 0.0);
    let m = CMatrix::identity(a.cols()).add(&w.conj_transpose().matmul(&w).scale(rho));
    Ok(linalg::logdet_hermitian_psd(&m)? / std::f64::consts::LN_2)
}

/// Sum over both destinations of the mutual information, per channel use.
/// `None` for outage blocks.
pub fn block_sum_rate(trace: &BlockTrace) -> Option<f64> {
    if trace.is_outage() {
        return None;
    }
    let noise_power = trace.noise.power();
    let mut total = 0.0;
    for dest in 1..=2 {
        let model = extract_effective_model(trace, dest).ok()?;
        total += mutual_information_bits(&model.a, &model.k, trace.gains.symbol_power(), noise_power).ok()?;
    }
    Some(total / SLOTS as f64)
}

/// One measured point of a rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub p_db: f64,
    pub trials: u64,
    /// Mean sum rate in bits per channel use.
    #[serde(rename = "sum_rate_bits_per_use")]
    pub sum_rate: f64,
    pub stderr: f64,
    pub outage_frac: f64,
}

/// Per-block sum rates in block order, `None` for outage blocks.
pub fn block_rates(scheme: SchemeId, params: &SimParams, trials: u64, master_seed: u64, jobs: usize) -> Vec<Option<f64>> {
    par_map(trials, jobs, |b| block_sum_rate(&scheme.run_block(BlockStreams::new(master_seed, b), params)))
}

/// Mean sum rate over `trials` noisy blocks at `p_db`; noise, conditioning
/// threshold and precoders come from `base`. Block `b` uses streams
/// `(master_seed, b)`, so points at different powers and different schemes
/// see the same channel and noise draws.
pub fn monte_carlo_rate(
    scheme: SchemeId,
    p_db: f64,
    base: &SimParams,
    trials: u64,
    master_seed: u64,
    jobs: usize,
) -> Result<RatePoint, RateError> {
    if !base.noise.enabled || base.noise.power() <= 0.0 {
        return Err(RateError::Mode("rates need noise; run noiseless checks with verify".into()));
    }
    if trials == 0 {
        return Err(RateError::Insufficient("zero trials".into()));
    }
    let rates = block_rates(scheme, &base.at_db(p_db), trials, master_seed, jobs);
    Ok(summarize(p_db, &rates))
}

/// Order-fixed mean, standard error and outage fraction.
pub fn summarize(p_db: f64, rates: &[Option<f64>]) -> RatePoint {
    let n = rates.len() as f64;
    let outages = rates.iter().filter(|r| r.is_none()).count();
    let values: Vec<f64> = rates.iter().map(|r| r.unwrap_or(0.0)).collect();
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    RatePoint {
        p_db,
        trials: rates.len() as u64,
        sum_rate: mean,
        stderr: (var / n).sqrt(),
        outage_frac: outages as f64 / n,
    }
}

/// Least-squares line of rate against `log2 P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the fit residuals.
    pub residual: f64,
}

/// Minimum span of a slope fit, in dB.
pub const MIN_SPAN_DB: f64 = 20.0;

pub fn db_to_log2(p_db: f64) -> f64 {
    p_db / 10.0 * std::f64::consts::LOG2_10
}

/// Ordinary least squares of `rate` on `log2 P` over `(log2 P, rate)` pairs.
pub fn fit_dof_slope(points: &[(f64, f64)]) -> Result<SlopeFit, RateError> {
    if points.len() < 3 {
        return Err(RateError::Insufficient(format!("{} points, need at least 3", points.len())));
    }
    let xmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if xmax - xmin < db_to_log2(MIN_SPAN_DB) - 1e-12 {
        return Err(RateError::Insufficient(format!(
            "points span {:.2} dB, need at least {MIN_SPAN_DB} dB",
            (xmax - xmin) / std::f64::consts::LOG2_10 * 10.0
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
    })
}

/// Rate against `log2 P` pairs of a curve.
pub fn log2_pairs(points: &[RatePoint]) -> Vec<(f64, f64)> {
    points.iter().map(|p| (db_to_log2(p.p_db), p.sum_rate)).collect()
}

/// Slopes between consecutive points (sorted by power).
pub fn segment_slopes(points: &[RatePoint]) -> Vec<f64> {
    log2_pairs(points).windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect()
}

/// Rate curve of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub scheme: SchemeId,
    pub points: Vec<RatePoint>,
    pub fit: Option<SlopeFit>,
}

impl RateCurve {
    /// Sorts points by power and fits a slope when there are enough of them.
    pub fn new(scheme: SchemeId, mut points: Vec<RatePoint>) -> Self {
        points.sort_by(|a, b| a.p_db.total_cmp(&b.p_db));
        let fit = fit_dof_slope(&log2_pairs(&points)).ok();
        RateCurve { scheme, points, fit }
    }

    pub fn segment_slopes(&self) -> Vec<f64> {
        segment_slopes(&self.points)
    }
}

/// Slope window a scheme's measured DoF must fall in over a 30..60 dB sweep.
pub fn acceptance_window(scheme: SchemeId) -> (f64, f64) {
    match scheme {
        SchemeId::Dcsis | SchemeId::Lsf => (1.20, 1.40),
        SchemeId::Tdma => (0.90, 1.10),
    }
}
