//! Types shared by the relaying schemes and a small dispatch layer over them.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{self, TdmaGains};
use crate::channel::{complex_normal, hop_output, BlockChannelState, BlockStreams, NoiseConfig, NoiseSamples, SLOTS};
use crate::dcsis::{self, DcsisGains};
use crate::ledger::Ledger;
use crate::linalg::{self, CMatrix, CVector, LinalgError, DEFAULT_COND_THRESHOLD};
use crate::lsf::{self, LsfGains, PrecoderSet};

/// Coefficients below this modulus are treated as exact zeros when dividing.
pub const MIN_COEFFICIENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeId {
    /// Retrospective alignment with delayed CSI at the sources.
    Dcsis,
    /// Retro-cooperative alignment with limited Shannon feedback to the relays.
    Lsf,
    /// Interference-free time sharing reference.
    Tdma,
}

impl SchemeId {
    pub const ALL: [SchemeId; 3] = [SchemeId::Dcsis, SchemeId::Lsf, SchemeId::Tdma];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Dcsis => "dcsis",
            SchemeId::Lsf => "lsf",
            SchemeId::Tdma => "tdma",
        }
    }

    /// Indices into [`BlockTrace::symbols`] wanted by destination `dest` (1 or 2).
    pub fn desired(self, dest: usize) -> &'static [usize] {
        match (self, dest) {
            (SchemeId::Dcsis | SchemeId::Lsf, 1) => &[0, 1],
            (SchemeId::Dcsis | SchemeId::Lsf, 2) => &[2, 3],
            (SchemeId::Tdma, 1) => &[0, 2],
            (SchemeId::Tdma, 2) => &[1],
            _ => panic!("destination index must be 1 or 2, got {dest}"),
        }
    }

    pub fn symbols_per_block(self) -> usize {
        match self {
            SchemeId::Dcsis | SchemeId::Lsf => 4,
            SchemeId::Tdma => 3,
        }
    }

    pub fn run_block(self, streams: BlockStreams, params: &SimParams) -> BlockTrace {
        match self {
            SchemeId::Dcsis => dcsis::run_block(streams, params),
            SchemeId::Lsf => lsf::run_block(streams, params),
            SchemeId::Tdma => baseline::run_block_tdma(streams, params),
        }
    }

    /// Re-runs the transmit chain of `trace` (same CSI and gains) with other
    /// symbol values and noise samples.
    pub fn replay(self, trace: &BlockTrace, symbols: &[Complex64], noise: &NoiseSamples) -> Result<Signals, Outage> {
        self.replay_at(trace, trace.cond_threshold, symbols, noise)
    }

    /// [`SchemeId::replay`] with another conditioning threshold; an infinite
    /// one skips the condition estimates, which the original run already made.
    pub(crate) fn replay_at(
        self,
        trace: &BlockTrace,
        cond_threshold: f64,
        symbols: &[Complex64],
        noise: &NoiseSamples,
    ) -> Result<Signals, Outage> {
        match (&trace.gains, self) {
            (Gains::Dcsis(g), SchemeId::Dcsis) => Ok(dcsis::replay(&trace.channel, g, symbols, noise)),
            (Gains::Lsf(g), SchemeId::Lsf) => lsf::replay(&trace.channel, g, cond_threshold, symbols, noise),
            (Gains::Tdma(g), SchemeId::Tdma) => Ok(baseline::replay(&trace.channel, g, symbols, noise)),
            _ => panic!("trace gains do not belong to scheme {self}"),
        }
    }

    /// Destination-side processing up to (not including) the final solve.
    pub fn front_end(self, trace: &BlockTrace, signals: &Signals, dest: usize) -> Result<Processed, Outage> {
        self.front_end_at(trace, trace.cond_threshold, signals, dest)
    }

    pub(crate) fn front_end_at(
        self,
        trace: &BlockTrace,
        cond_threshold: f64,
        signals: &Signals,
        dest: usize,
    ) -> Result<Processed, Outage> {
        let y = signals.dest_rx[dest - 1];
        match (&trace.gains, self) {
            (Gains::Dcsis(g), SchemeId::Dcsis) => dcsis::front_end(dest, y, &trace.channel, g, cond_threshold),
            (Gains::Lsf(g), SchemeId::Lsf) => lsf::front_end(dest, y, &trace.channel, g, cond_threshold),
            (Gains::Tdma(g), SchemeId::Tdma) => baseline::front_end(dest, y, &trace.channel, g),
            _ => panic!("trace gains do not belong to scheme {self}"),
        }
    }

    /// Zero-forcing estimate of destination `dest`'s desired symbols.
    pub fn decode(self, trace: &BlockTrace, dest: usize) -> Result<CVector, Outage> {
        let p = self.front_end(trace, &trace.signals, dest)?;
        p.solve(trace.cond_threshold)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dcsis" => Ok(SchemeId::Dcsis),
            "lsf" => Ok(SchemeId::Lsf),
            "tdma" => Ok(SchemeId::Tdma),
            other => Err(format!("unknown scheme '{other}' (expected dcsis, lsf or tdma)")),
        }
    }
}

/// Per-block simulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Transmit power constraint `P` per node per channel use.
    pub power: f64,
    pub noise: NoiseConfig,
    pub cond_threshold: f64,
    /// Precoders of the limited-feedback scheme; ignored by the others.
    pub precoders: PrecoderSet,
}

impl SimParams {
    pub fn new(power: f64, noise: NoiseConfig) -> Self {
        assert!(power > 0.0 && power.is_finite(), "power must be positive");
        SimParams {
            power,
            noise,
            cond_threshold: DEFAULT_COND_THRESHOLD,
            precoders: PrecoderSet::default(),
        }
    }

    pub fn from_db(p_db: f64, noise: NoiseConfig) -> Self {
        Self::new(10f64.powf(p_db / 10.0), noise)
    }

    pub fn with_cond_threshold(mut self, cond_threshold: f64) -> Self {
        self.cond_threshold = cond_threshold;
        self
    }

    /// The same settings at another power.
    pub fn at_db(&self, p_db: f64) -> Self {
        SimParams {
            power: 10f64.powf(p_db / 10.0),
            ..*self
        }
    }

    pub fn with_precoders(mut self, precoders: PrecoderSet) -> Self {
        self.precoders = precoders;
        self
    }
}

/// The two data symbols of one source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolPair {
    pub s1: Complex64,
    pub s2: Complex64,
}

impl SymbolPair {
    pub fn new(s1: Complex64, s2: Complex64) -> Self {
        SymbolPair { s1, s2 }
    }

    pub fn zero() -> Self {
        Self::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    }

    /// Two i.i.d. CN(0,1) symbols scaled to per-symbol power `power`.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Self {
        let s = power.sqrt();
        let s1 = complex_normal(rng) * s;
        let s2 = complex_normal(rng) * s;
        Self::new(s1, s2)
    }

    pub fn as_array(&self) -> [Complex64; 2] {
        [self.s1, self.s2]
    }

    pub fn to_cvector(&self) -> CVector {
        CVector::from(self.as_array())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.s1 * c, self.s2 * c)
    }

    /// Row-vector product `row * [s1 s2]^T`.
    pub fn dot(&self, row: &[Complex64; 2]) -> Complex64 {
        row[0] * self.s1 + row[1] * self.s2
    }
}

impl From<&CVector> for SymbolPair {
    fn from(v: &CVector) -> Self {
        assert_eq!(v.len(), 2);
        SymbolPair::new(v[0], v[1])
    }
}

/// A block whose required inversion is numerically singular, or whose
/// normalisation hits a vanishing coefficient.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("outage: {reason}")]
pub struct Outage {
    pub reason: String,
    pub cond: Option<f64>,
}

impl Outage {
    pub fn new(reason: impl Into<String>) -> Self {
        Outage {
            reason: reason.into(),
            cond: None,
        }
    }

    pub fn from_linalg(what: &str, e: LinalgError) -> Self {
        match e {
            LinalgError::Singular { cond } => Outage {
                reason: format!("{what} is singular"),
                cond: Some(cond),
            },
            other => Outage::new(format!("{what}: {other}")),
        }
    }
}

/// Divides by a coefficient, reporting an outage when it vanishes.
pub(crate) fn checked_div(num: Complex64, den: Complex64, what: &str) -> Result<Complex64, Outage> {
    if den.norm() < MIN_COEFFICIENT {
        return Err(Outage::new(format!("{what} is zero")));
    }
    Ok(num / den)
}

/// Stacked linear observations at a destination: `obs = stack * desired + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub stack: CMatrix,
    pub obs: CVector,
}

impl Processed {
    pub fn solve(&self, cond_threshold: f64) -> Result<CVector, Outage> {
        linalg::solve_with_threshold(&self.stack, &self.obs, cond_threshold)
            .map_err(|e| Outage::from_linalg("destination stack", e))
    }
}

/// Every transmitted and received sample of one block.
/// Index convention: `[node - 1][slot - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signals {
    pub source_tx: [[Complex64; SLOTS]; 2],
    pub relay_rx: [[Complex64; SLOTS]; 2],
    pub relay_tx: [[Complex64; SLOTS]; 2],
    pub dest_rx: [[Complex64; SLOTS]; 2],
    /// Symbols decoded at each relay (`[u1, u2, v1, v2]`), for schemes whose relays decode.
    pub relay_estimates: Option<[[Complex64; 4]; 2]>,
}

impl Signals {
    pub fn zero() -> Self {
        let z = [[Complex64::new(0.0, 0.0); SLOTS]; 2];
        Signals {
            source_tx: z,
            relay_rx: z,
            relay_tx: z,
            dest_rx: z,
            relay_estimates: None,
        }
    }

    pub(crate) fn source_pair(&self, t: usize) -> [Complex64; 2] {
        [self.source_tx[0][t - 1], self.source_tx[1][t - 1]]
    }

    pub(crate) fn relay_tx_pair(&self, t: usize) -> [Complex64; 2] {
        [self.relay_tx[0][t - 1], self.relay_tx[1][t - 1]]
    }

    pub(crate) fn set_source(&mut self, t: usize, x: [Complex64; 2]) {
        self.source_tx[0][t - 1] = x[0];
        self.source_tx[1][t - 1] = x[1];
    }

    pub(crate) fn set_relay_tx(&mut self, t: usize, x: [Complex64; 2]) {
        self.relay_tx[0][t - 1] = x[0];
        self.relay_tx[1][t - 1] = x[1];
    }

    /// Runs first-hop slot `t` over the stored source samples.
    pub(crate) fn first_hop(&mut self, channel: &BlockChannelState, noise: &NoiseSamples, t: usize) {
        let y = hop_output(&channel.h[t - 1], self.source_pair(t), noise.relay_pair(t));
        self.relay_rx[0][t - 1] = y[0];
        self.relay_rx[1][t - 1] = y[1];
    }

    pub(crate) fn second_hop(&mut self, channel: &BlockChannelState, noise: &NoiseSamples, t: usize) {
        let y = hop_output(&channel.g[t - 1], self.relay_tx_pair(t), noise.dest_pair(t));
        self.dest_rx[0][t - 1] = y[0];
        self.dest_rx[1][t - 1] = y[1];
    }
}

/// Scheme-specific amplification and normalisation factors of a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Gains {
    Dcsis(DcsisGains),
    Lsf(LsfGains),
    Tdma(TdmaGains),
}

impl Gains {
    /// Per-symbol transmit variance of the data symbols.
    pub fn symbol_power(&self) -> f64 {
        match self {
            Gains::Dcsis(g) => g.symbol_power,
            Gains::Lsf(g) => g.symbol_power,
            Gains::Tdma(g) => g.symbol_power,
        }
    }
}

/// Condition number of a matrix the scheme must invert. Infinite values are
/// stored as `f64::MAX` so the trace stays valid JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub label: String,
    pub value: f64,
}

impl ConditionRecord {
    pub fn new(label: &str, value: f64) -> Self {
        ConditionRecord {
            label: label.to_owned(),
            value: if value.is_finite() { value } else { f64::MAX },
        }
    }
}

pub(crate) fn condition_of(m: &CMatrix) -> f64 {
    linalg::condition_number(m).unwrap_or(f64::INFINITY)
}

/// Complete record of one simulated block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTrace {
    pub scheme: SchemeId,
    pub power: f64,
    pub noise: NoiseConfig,
    pub cond_threshold: f64,
    pub channel: BlockChannelState,
    /// Source symbols: `[u1, u2, v1, v2]`, or `[x1, x2, x3]` for time sharing.
    pub symbols: Vec<Complex64>,
    pub noise_samples: NoiseSamples,
    pub gains: Gains,
    pub signals: Signals,
    pub outage: Option<Outage>,
    pub conditions: Vec<ConditionRecord>,
    pub ledger: Ledger,
}

impl BlockTrace {
    pub fn is_outage(&self) -> bool {
        self.outage.is_some()
    }

    pub fn condition(&self, label: &str) -> Option<f64> {
        self.conditions.iter().find(|c| c.label == label).map(|c| c.value)
    }

    pub fn desired_symbols(&self, dest: usize) -> CVector {
        self.scheme.desired(dest).iter().map(|&i| self.symbols[i]).collect::<Vec<_>>().into()
    }

    /// Checks every stored received sample against the channel law applied to
    /// the stored transmit samples and noise. Exact comparison.
    pub fn is_replay_consistent(&self) -> bool {
        let mut check = self.signals.clone();
        for t in 1..=SLOTS {
            check.first_hop(&self.channel, &self.noise_samples, t);
            check.second_hop(&self.channel, &self.noise_samples, t);
        }
        check.relay_rx == self.signals.relay_rx && check.dest_rx == self.signals.dest_rx
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialises")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
