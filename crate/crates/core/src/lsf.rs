//! Retro-cooperative interference alignment with limited Shannon feedback.
//!
//! Sources precode two symbols over three first-hop uses with fixed 3x2
//! matrices and know nothing else. Relays know the first hop instantly; after
//! second-hop slot 1 each relay also holds `G(1)` and its own destination's
//! output `Y_Di(1)`, from which it rebuilds the one observation it is missing,
//! decodes all four symbols and retransmits the interference its destination
//! saw.
//!
//! Block schedule: first-hop slots 1..3, then second-hop slots 1..3. Relay 2
//! is silent in second-hop slot 2 and relay 1 in slot 3.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{draw_block_channels, silent, BlockChannelState, BlockStreams, NoiseConfig, NoiseSamples, Purpose};
use crate::ledger::{Hop, Knowledge, Ledger, Node};
use crate::linalg::{self, CMatrix, CVector};
use crate::scheme::{
    checked_div, condition_of, BlockTrace, ConditionRecord, Gains, Outage, Processed, SchemeId, Signals, SimParams,
    SymbolPair, MIN_COEFFICIENT,
};

/// Minimum modulus of any two-row minor of a precoder.
pub const MIN_PRECODER_MINOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrecoderError {
    #[error("precoder must be 3x2, got {0}x{1}")]
    Shape(usize, usize),
    #[error("precoder {matrix} has a zero entry at ({row}, {col})")]
    ZeroEntry { matrix: usize, row: usize, col: usize },
    #[error("rows {r1} and {r2} of precoder {matrix} are not independent (|det| = {det:e})")]
    SingularPair { matrix: usize, r1: usize, r2: usize, det: f64 },
}

/// Two 3x2 precoders: row `t` of `v1` maps `u` onto first-hop slot `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderPair {
    v1: CMatrix,
    v2: CMatrix,
}

impl PrecoderPair {
    /// Validates that every entry is nonzero and any two rows of the same
    /// matrix are linearly independent.
    pub fn new(v1: CMatrix, v2: CMatrix) -> Result<Self, PrecoderError> {
        for (k, v) in [(1, &v1), (2, &v2)] {
            validate_precoder(k, v)?;
        }
        Ok(PrecoderPair { v1, v2 })
    }

    /// Row `t` (1-based) of precoder `k`.
    pub fn row(&self, k: usize, t: usize) -> [Complex64; 2] {
        let v = if k == 1 { &self.v1 } else { &self.v2 };
        [v[(t - 1, 0)], v[(t - 1, 1)]]
    }

    pub fn v1(&self) -> &CMatrix {
        &self.v1
    }

    pub fn v2(&self) -> &CMatrix {
        &self.v2
    }

    /// Largest squared row norm over both matrices.
    pub fn max_row_norm_sqr(&self) -> f64 {
        (1..=3)
            .flat_map(|t| [self.row(1, t), self.row(2, t)])
            .map(|r| r[0].norm_sqr() + r[1].norm_sqr())
            .fold(0.0, f64::max)
    }
}

fn validate_precoder(k: usize, v: &CMatrix) -> Result<(), PrecoderError> {
    if v.rows() != 3 || v.cols() != 2 {
        return Err(PrecoderError::Shape(v.rows(), v.cols()));
    }
    for r in 0..3 {
        for c in 0..2 {
            if v[(r, c)].norm() == 0.0 {
                return Err(PrecoderError::ZeroEntry { matrix: k, row: r + 1, col: c + 1 });
            }
        }
    }
    for (r1, r2) in [(0, 1), (0, 2), (1, 2)] {
        let det = (v[(r1, 0)] * v[(r2, 1)] - v[(r1, 1)] * v[(r2, 0)]).norm();
        if det <= MIN_PRECODER_MINOR {
            return Err(PrecoderError::SingularPair { matrix: k, r1: r1 + 1, r2: r2 + 1, det });
        }
    }
    Ok(())
}

/// Fixed Vandermonde-style precoders: rows `(1, t)` for `V1`, `(1, -t)` for `V2`.
pub fn make_precoders() -> PrecoderPair {
    let v1 = CMatrix::from_real_rows(&[[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]]);
    let v2 = CMatrix::from_real_rows(&[[1.0, -1.0], [1.0, -2.0], [1.0, -3.0]]);
    PrecoderPair::new(v1, v2).expect("fixed precoders are valid")
}

/// Rows `(1, w^(t-1))` for `V1` and `(1, -w^(t-1))` for `V2`, `w = exp(2 pi i / 3)`.
/// Every row pair has condition number `sqrt(3)` and every row has squared
/// norm 2, against up to 15 and 10 for the integer rows.
pub fn unit_circle_precoders() -> PrecoderPair {
    let one = Complex64::new(1.0, 0.0);
    let w = |k: f64| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k / 3.0);
    let v1 = CMatrix::from_rows(&[[one, w(0.0)], [one, w(1.0)], [one, w(2.0)]]);
    let v2 = CMatrix::from_rows(&[[one, -w(0.0)], [one, -w(1.0)], [one, -w(2.0)]]);
    PrecoderPair::new(v1, v2).expect("fixed precoders are valid")
}

/// Which fixed precoder pair a block uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderSet {
    /// [`make_precoders`].
    Integer,
    /// [`unit_circle_precoders`].
    #[default]
    UnitCircle,
}

impl PrecoderSet {
    pub fn build(self) -> PrecoderPair {
        match self {
            PrecoderSet::Integer => make_precoders(),
            PrecoderSet::UnitCircle => unit_circle_precoders(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrecoderSet::Integer => "integer",
            PrecoderSet::UnitCircle => "unit_circle",
        }
    }
}

impl std::str::FromStr for PrecoderSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "integer" => Ok(PrecoderSet::Integer),
            "unit_circle" | "unit-circle" => Ok(PrecoderSet::UnitCircle),
            other => Err(format!("unknown precoder set '{other}' (expected integer or unit_circle)")),
        }
    }
}

fn add_rows(a: [Complex64; 2], ca: Complex64, b: [Complex64; 2], cb: Complex64) -> [Complex64; 2] {
    [a[0] * ca + b[0] * cb, a[1] * ca + b[1] * cb]
}

fn row_norm(r: &[Complex64; 2]) -> f64 {
    (r[0].norm_sqr() + r[1].norm_sqr()).sqrt()
}

/// The combination row relay `which` retransmits:
/// relay 1 sends `(G11(1) H12(2) V22 + G12(1) H22(3) V23) v`,
/// relay 2 sends `(G21(1) H11(2) V12 + G22(1) H21(3) V13) u`.
pub fn combination_row(which: usize, g1: &CMatrix, h: &[CMatrix; 3], pre: &PrecoderPair) -> [Complex64; 2] {
    match which {
        1 => add_rows(pre.row(2, 2), g1[(0, 0)] * h[1][(0, 1)], pre.row(2, 3), g1[(0, 1)] * h[2][(1, 1)]),
        2 => add_rows(pre.row(1, 2), g1[(1, 0)] * h[1][(0, 0)], pre.row(1, 3), g1[(1, 1)] * h[2][(1, 0)]),
        _ => panic!("relay index must be 1 or 2"),
    }
}

/// The row multiplying destination `which`'s own symbols in `Y_D(1)`:
/// `G_w1(1) H_1w(2) V_w2 + G_w2(1) H_2w(3) V_w3`.
pub fn desired_row_slot1(which: usize, g1: &CMatrix, h: &[CMatrix; 3], pre: &PrecoderPair) -> [Complex64; 2] {
    let d = which - 1;
    add_rows(pre.row(which, 2), g1[(d, 0)] * h[1][(0, d)], pre.row(which, 3), g1[(d, 1)] * h[2][(1, d)])
}

/// Statistical slot-1 relay gain: the larger of `E|Y_R1(2)|^2` and
/// `E|Y_R2(3)|^2` under unit-variance fading is brought to `P`.
pub fn relay_t1_gain(power: f64, symbol_power: f64, noise: &NoiseConfig, pre: &PrecoderPair) -> f64 {
    let norm_sqr = |k: usize, t: usize| {
        let r = pre.row(k, t);
        r[0].norm_sqr() + r[1].norm_sqr()
    };
    let forwarded = (norm_sqr(1, 2) + norm_sqr(2, 2)).max(norm_sqr(1, 3) + norm_sqr(2, 3));
    (power / (symbol_power * forwarded + noise.power())).sqrt()
}

/// Gains of one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsfGains {
    pub symbol_power: f64,
    /// Statistical gain on the forwarded samples at second-hop slot 1.
    pub relay_t1: f64,
    /// Normalisers of the slot-2 (relay 1) and slot-3 (relay 2) retransmissions.
    pub relay_t23: [f64; 2],
    pub precoders: PrecoderSet,
}

impl LsfGains {
    pub fn new(channel: &BlockChannelState, power: f64, noise: &NoiseConfig, set: PrecoderSet) -> Result<Self, Outage> {
        let pre = &set.build();
        let symbol_power = power / pre.max_row_norm_sqr();
        let relay_t1 = relay_t1_gain(power, symbol_power, noise, pre);
        let mut relay_t23 = [0.0; 2];
        for (which, g) in relay_t23.iter_mut().enumerate() {
            let n = row_norm(&combination_row(which + 1, &channel.g[0], &channel.h, pre));
            if n < MIN_COEFFICIENT {
                return Err(Outage::new(format!("relay {} combination row vanishes", which + 1)));
            }
            *g = (power / symbol_power).sqrt() / n;
        }
        Ok(LsfGains {
            symbol_power,
            relay_t1,
            relay_t23,
            precoders: set,
        })
    }
}

/// First hop: `X_S1(t) = V1t u`, `X_S2(t) = V2t v`. Returns `[X_S1(1..3), X_S2(1..3)]`.
pub fn encode_hop1(u: &SymbolPair, v: &SymbolPair, pre: &PrecoderPair) -> [[Complex64; 3]; 2] {
    [
        [1, 2, 3].map(|t| u.dot(&pre.row(1, t))),
        [1, 2, 3].map(|t| v.dot(&pre.row(2, t))),
    ]
}

/// Second-hop slot 1: relay 1 forwards `Y_R1(2)`, relay 2 forwards `Y_R2(3)`.
pub fn relay_t1_signals(y_r1_2: Complex64, y_r2_3: Complex64, gain: f64) -> [Complex64; 2] {
    [y_r1_2 * gain, y_r2_3 * gain]
}

/// Rebuilds the peer relay's forwarded observation from destination feedback.
///
/// `g_row` is `(G_w1(1), G_w2(1))` for relay `which`; `own` is the relay's
/// own (pre-gain) forwarded sample.
pub fn relay_exchange(
    which: usize,
    y_d: Complex64,
    g_row: [Complex64; 2],
    own: Complex64,
    gain: f64,
) -> Result<Complex64, Outage> {
    let (own_coef, peer_coef) = match which {
        1 => (g_row[0], g_row[1]),
        2 => (g_row[1], g_row[0]),
        _ => panic!("relay index must be 1 or 2"),
    };
    checked_div(y_d / gain - own_coef * own, peer_coef, "peer relay coefficient")
}

/// The 4x4 system relay `which` solves: its three first-hop observations and
/// the rebuilt peer observation, in unknowns `[u1, u2, v1, v2]`.
pub fn relay_stack(which: usize, h: &[CMatrix; 3], pre: &PrecoderPair) -> CMatrix {
    let row = |relay: usize, t: usize| -> [Complex64; 4] {
        let a = pre.row(1, t);
        let b = pre.row(2, t);
        let h1 = h[t - 1][(relay - 1, 0)];
        let h2 = h[t - 1][(relay - 1, 1)];
        [h1 * a[0], h1 * a[1], h2 * b[0], h2 * b[1]]
    };
    let peer = if which == 1 { row(2, 3) } else { row(1, 2) };
    let me = which;
    CMatrix::from_rows(&[row(me, 1), row(me, 2), row(me, 3), peer])
}

/// Decodes `[u1, u2, v1, v2]` at relay `which` from its own observations
/// `own = Y_Rw(1..3)` and the exchanged peer observation.
pub fn relay_decode_symbols(
    which: usize,
    own: [Complex64; 3],
    exchanged: Complex64,
    h: &[CMatrix; 3],
    pre: &PrecoderPair,
    cond_threshold: f64,
) -> Result<(SymbolPair, SymbolPair), Outage> {
    let rhs = CVector::from([own[0], own[1], own[2], exchanged]);
    let x = linalg::solve_with_threshold(&relay_stack(which, h, pre), &rhs, cond_threshold)
        .map_err(|e| Outage::from_linalg("relay stack", e))?;
    Ok((SymbolPair::new(x[0], x[1]), SymbolPair::new(x[2], x[3])))
}

/// Retransmission of relay `which` from its decoded symbols.
pub fn relay_retransmit(
    which: usize,
    u_hat: &SymbolPair,
    v_hat: &SymbolPair,
    g1: &CMatrix,
    h: &[CMatrix; 3],
    pre: &PrecoderPair,
    gain: f64,
) -> Complex64 {
    let row = combination_row(which, g1, h, pre);
    let sym = if which == 1 { v_hat } else { u_hat };
    sym.dot(&row) * gain
}

/// Relay pairs for second-hop slots 2 and 3 (`X_R1(2)`, then `X_R2(3)`, the
/// peer silent in each).
pub fn relay_t23_signals(
    estimates: [(SymbolPair, SymbolPair); 2],
    g1: &CMatrix,
    h: &[CMatrix; 3],
    pre: &PrecoderPair,
    gains: [f64; 2],
) -> [[Complex64; 2]; 2] {
    let x1 = relay_retransmit(1, &estimates[0].0, &estimates[0].1, g1, h, pre, gains[0]);
    let x2 = relay_retransmit(2, &estimates[1].0, &estimates[1].1, g1, h, pre, gains[1]);
    [[x1, silent()], [silent(), x2]]
}

pub(crate) fn transmit(
    channel: &BlockChannelState,
    gains: &LsfGains,
    cond_threshold: f64,
    u: &SymbolPair,
    v: &SymbolPair,
    noise: &NoiseSamples,
    mut ledger: Option<&mut Ledger>,
) -> Result<Signals, Outage> {
    let pre = gains.precoders.build();
    let mut record = |hop, slot, phase: &str| ledger.as_mut().map(|l| l.channel_use(hop, slot, phase));
    let mut s = Signals::zero();

    let x = encode_hop1(u, v, &pre);
    for t in 1..=3 {
        s.set_source(t, [x[0][t - 1], x[1][t - 1]]);
        s.first_hop(channel, noise, t);
        record(Hop::First, t as u8, "hop one");
    }

    s.set_relay_tx(1, relay_t1_signals(s.relay_rx[0][1], s.relay_rx[1][2], gains.relay_t1));
    s.second_hop(channel, noise, 1);
    record(Hop::Second, 1, "hop two, forwarding");

    // Feedback: relay i now holds Y_Di(1) and G(1).
    let g1 = &channel.g[0];
    let peer_of_1 = relay_exchange(1, s.dest_rx[0][0], [g1[(0, 0)], g1[(0, 1)]], s.relay_rx[0][1], gains.relay_t1);
    let peer_of_2 = relay_exchange(2, s.dest_rx[1][0], [g1[(1, 0)], g1[(1, 1)]], s.relay_rx[1][2], gains.relay_t1);
    let decoded = |which: usize, peer: Result<Complex64, Outage>| {
        relay_decode_symbols(which, s.relay_rx[which - 1], peer?, &channel.h, &pre, cond_threshold)
    };
    let est1 = decoded(1, peer_of_1)?;
    let est2 = decoded(2, peer_of_2)?;
    s.relay_estimates = Some([
        [est1.0.s1, est1.0.s2, est1.1.s1, est1.1.s2],
        [est2.0.s1, est2.0.s2, est2.1.s1, est2.1.s2],
    ]);

    let x23 = relay_t23_signals([est1, est2], g1, &channel.h, &pre, gains.relay_t23);
    s.set_relay_tx(2, x23[0]);
    s.second_hop(channel, noise, 2);
    record(Hop::Second, 2, "hop two, relay 1 retransmits");
    s.set_relay_tx(3, x23[1]);
    s.second_hop(channel, noise, 3);
    record(Hop::Second, 3, "hop two, relay 2 retransmits");

    if let Some(l) = ledger {
        for seq in 0..3 {
            l.access(seq, Node::Source(1), Vec::new());
            l.access(seq, Node::Source(2), Vec::new());
        }
        l.access(3, Node::Relay(1), Vec::new());
        l.access(3, Node::Relay(2), Vec::new());
        for (seq, relay) in [(4u32, 1u8), (5, 2)] {
            let mut knows: Vec<Knowledge> = (1..=3)
                .map(|slot| Knowledge::Coefficients { hop: Hop::First, slot })
                .collect();
            knows.push(Knowledge::Coefficients { hop: Hop::Second, slot: 1 });
            knows.push(Knowledge::DestOutput { dest: relay, slot: 1 });
            l.access(seq, Node::Relay(relay), knows);
        }
    }
    Ok(s)
}

pub(crate) fn replay(
    channel: &BlockChannelState,
    gains: &LsfGains,
    cond_threshold: f64,
    symbols: &[Complex64],
    noise: &NoiseSamples,
) -> Result<Signals, Outage> {
    let u = SymbolPair::new(symbols[0], symbols[1]);
    let v = SymbolPair::new(symbols[2], symbols[3]);
    transmit(channel, gains, cond_threshold, &u, &v, noise, None)
}

/// Destination processing up to the final 2x2 solve.
///
/// Destination 1 strips the slot-2 retransmission (its interference) from
/// `Y_D1(1)` and stacks it with the slot-3 retransmission; destination 2
/// mirrors this with the slots exchanged.
pub fn front_end(
    which: usize,
    y: [Complex64; 3],
    channel: &BlockChannelState,
    gains: &LsfGains,
    _cond_threshold: f64,
) -> Result<Processed, Outage> {
    let pre = gains.precoders.build();
    let d = which - 1;
    let g1 = &channel.g[0];
    let from_r1 = checked_div(y[1], channel.g[1][(d, 0)] * gains.relay_t23[0], "second-hop slot 2 coefficient")?;
    let from_r2 = checked_div(y[2], channel.g[2][(d, 1)] * gains.relay_t23[1], "second-hop slot 3 coefficient")?;
    let y1 = y[0] / gains.relay_t1;
    let own = desired_row_slot1(which, g1, &channel.h, &pre);
    let (obs, other) = match which {
        1 => ([y1 - from_r1, from_r2], combination_row(2, g1, &channel.h, &pre)),
        2 => ([y1 - from_r2, from_r1], combination_row(1, g1, &channel.h, &pre)),
        _ => panic!("destination index must be 1 or 2"),
    };
    Ok(Processed {
        stack: CMatrix::from_rows(&[own, other]),
        obs: CVector::from(obs),
    })
}

pub fn decode_destination(
    which: usize,
    y: [Complex64; 3],
    channel: &BlockChannelState,
    gains: &LsfGains,
    cond_threshold: f64,
) -> Result<SymbolPair, Outage> {
    let p = front_end(which, y, channel, gains, cond_threshold)?;
    Ok(SymbolPair::from(&p.solve(cond_threshold)?))
}

/// The 2x2 stack destination `which` inverts.
pub fn destination_stack(which: usize, channel: &BlockChannelState, pre: &PrecoderPair) -> CMatrix {
    let own = desired_row_slot1(which, &channel.g[0], &channel.h, pre);
    let other = combination_row(3 - which, &channel.g[0], &channel.h, pre);
    CMatrix::from_rows(&[own, other])
}

pub fn conditions(channel: &BlockChannelState, pre: &PrecoderPair) -> Vec<ConditionRecord> {
    vec![
        ConditionRecord::new("relay1_stack", condition_of(&relay_stack(1, &channel.h, pre))),
        ConditionRecord::new("relay2_stack", condition_of(&relay_stack(2, &channel.h, pre))),
        ConditionRecord::new("dest1_stack", condition_of(&destination_stack(1, channel, pre))),
        ConditionRecord::new("dest2_stack", condition_of(&destination_stack(2, channel, pre))),
    ]
}

pub fn simulate(
    channel: BlockChannelState,
    u: SymbolPair,
    v: SymbolPair,
    noise_samples: NoiseSamples,
    params: &SimParams,
) -> BlockTrace {
    let pre = params.precoders.build();
    let conditions = conditions(&channel, &pre);
    let mut outage = conditions
        .iter()
        .find(|c| c.value > params.cond_threshold)
        .map(|c| Outage {
            reason: format!("{} is singular", c.label),
            cond: Some(c.value),
        });
    let gains = match LsfGains::new(&channel, params.power, &params.noise, params.precoders) {
        Ok(g) => g,
        Err(e) => {
            outage.get_or_insert(e);
            let symbol_power = params.power / pre.max_row_norm_sqr();
            LsfGains {
                symbol_power,
                relay_t1: relay_t1_gain(params.power, symbol_power, &params.noise, &pre),
                relay_t23: [0.0, 0.0],
                precoders: params.precoders,
            }
        }
    };
    for d in 0..2 {
        if channel.g[1][(d, 0)].norm() < MIN_COEFFICIENT || channel.g[2][(d, 1)].norm() < MIN_COEFFICIENT {
            outage.get_or_insert(Outage::new("retransmission coefficient is zero"));
        }
    }
    let mut ledger = Ledger::new(4);
    let signals = match transmit(&channel, &gains, params.cond_threshold, &u, &v, &noise_samples, Some(&mut ledger)) {
        Ok(s) => s,
        Err(e) => {
            // Relays could not decode: they stay silent after slot 1.
            outage.get_or_insert(e);
            ledger = Ledger::new(4);
            silent_after_forwarding(&channel, &gains, &u, &v, &noise_samples, &mut ledger)
        }
    };
    BlockTrace {
        scheme: SchemeId::Lsf,
        power: params.power,
        noise: params.noise,
        cond_threshold: params.cond_threshold,
        channel,
        symbols: vec![u.s1, u.s2, v.s1, v.s2],
        noise_samples,
        gains: Gains::Lsf(gains),
        signals,
        outage,
        conditions,
        ledger,
    }
}

fn silent_after_forwarding(
    channel: &BlockChannelState,
    gains: &LsfGains,
    u: &SymbolPair,
    v: &SymbolPair,
    noise: &NoiseSamples,
    ledger: &mut Ledger,
) -> Signals {
    let pre = gains.precoders.build();
    let mut s = Signals::zero();
    let x = encode_hop1(u, v, &pre);
    for t in 1..=3 {
        s.set_source(t, [x[0][t - 1], x[1][t - 1]]);
        s.first_hop(channel, noise, t);
        ledger.channel_use(Hop::First, t as u8, "hop one");
    }
    s.set_relay_tx(1, relay_t1_signals(s.relay_rx[0][1], s.relay_rx[1][2], gains.relay_t1));
    for t in 1..=3 {
        s.second_hop(channel, noise, t);
        ledger.channel_use(Hop::Second, t as u8, "hop two");
    }
    s
}

pub fn run_block(streams: BlockStreams, params: &SimParams) -> BlockTrace {
    let pre = params.precoders.build();
    let channel = draw_block_channels(streams.stream(Purpose::Channel));
    let mut rng = streams.stream(Purpose::Symbols).rng();
    let symbol_power = params.power / pre.max_row_norm_sqr();
    let u = SymbolPair::draw(&mut rng, symbol_power);
    let v = SymbolPair::draw(&mut rng, symbol_power);
    let noise = NoiseSamples::draw(&params.noise, streams.stream(Purpose::Noise));
    simulate(channel, u, v, noise, params)
}
