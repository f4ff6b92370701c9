//! Retrospective interference alignment with delayed CSI at the sources.
//!
//! Each source sends two symbols in three first-hop uses; relays are pure
//! amplify-and-forward buffers with no channel knowledge. Destinations have
//! global CSI and undo every gain, which is why all gains below are either
//! statistical constants or deterministic functions of the CSI.
//!
//! Block schedule (global order):
//!
//! | order | hop | slot | phase                                      |
//! |-------|-----|------|--------------------------------------------|
//! | 0, 1  | 1   | 1, 2 | sources send `u_t`, `v_t`                  |
//! | 2     | 2   | 1    | relays forward `Y_R(1) + Y_R(2)`           |
//! | 3     | 1   | 3    | sources send `B21 u` and `B12 v`           |
//! | 4, 5  | 2   | 2, 3 | relay 1 then relay 2 forward `Y_R(3)`      |

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_block_channels, silent, BlockChannelState, BlockStreams, NoiseConfig, NoiseSamples, Purpose};
use crate::ledger::{Hop, Knowledge, Ledger, Node};
use crate::linalg::{self, CMatrix, CVector};
use crate::scheme::{
    checked_div, condition_of, BlockTrace, ConditionRecord, Gains, Outage, Processed, SchemeId, Signals, SimParams,
    SymbolPair, MIN_COEFFICIENT,
};

/// The four 1x2 rows seen by the destinations after second-hop slot 1:
/// `Y_D1(1) ~ B11 u + B12 v`, `Y_D2(1) ~ B21 u + B22 v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BMatrixSet {
    pub b11: [Complex64; 2],
    pub b12: [Complex64; 2],
    pub b21: [Complex64; 2],
    pub b22: [Complex64; 2],
}

impl BMatrixSet {
    /// `[B11; B21]`, the stack destination 1 inverts.
    pub fn stack_u(&self) -> CMatrix {
        CMatrix::from_rows(&[self.b11, self.b21])
    }

    /// `[B12; B22]`.
    pub fn stack_v(&self) -> CMatrix {
        CMatrix::from_rows(&[self.b12, self.b22])
    }
}

fn row_norm(r: &[Complex64; 2]) -> f64 {
    (r[0].norm_sqr() + r[1].norm_sqr()).sqrt()
}

/// `B_ij = G_i1(1) [H_1j(1), H_1j(2)] + G_i2(1) [H_2j(1), H_2j(2)]`.
pub fn compute_b(g1: &CMatrix, h1: &CMatrix, h2: &CMatrix) -> BMatrixSet {
    let b = |i: usize, j: usize| -> [Complex64; 2] {
        [
            g1[(i, 0)] * h1[(0, j)] + g1[(i, 1)] * h1[(1, j)],
            g1[(i, 0)] * h2[(0, j)] + g1[(i, 1)] * h2[(1, j)],
        ]
    };
    BMatrixSet {
        b11: b(0, 0),
        b12: b(0, 1),
        b21: b(1, 0),
        b22: b(1, 1),
    }
}

/// Gains of one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcsisGains {
    pub symbol_power: f64,
    /// Relay gain on `Y_R(1) + Y_R(2)`.
    pub relay_phase1: f64,
    /// Source gains on `B21 u` and `B12 v`.
    pub source_phase2: [f64; 2],
    /// Relay gain on `Y_R(3)`.
    pub relay_phase2: f64,
}

/// Statistical relay gain for the phase-one sum: averaged over unit-variance
/// fading, `E|Y_R(1) + Y_R(2)|^2 = 2 (2 P_x + sigma^2)`.
pub fn relay_phase1_gain(power: f64, symbol_power: f64, noise: &NoiseConfig) -> f64 {
    (power / (2.0 * (2.0 * symbol_power + noise.power()))).sqrt()
}

/// Statistical relay gain for `Y_R(3)`: each source sample has power exactly
/// `P`, so `E|Y_R(3)|^2 = 2P + sigma^2`.
pub fn relay_phase2_gain(power: f64, noise: &NoiseConfig) -> f64 {
    (power / (2.0 * power + noise.power())).sqrt()
}

/// Normalisers that bring `B21 u` and `B12 v` to power `P`.
pub fn source_phase2_gains(b: &BMatrixSet, power: f64, symbol_power: f64) -> Result<[f64; 2], Outage> {
    let n21 = row_norm(&b.b21);
    let n12 = row_norm(&b.b12);
    if n21 < MIN_COEFFICIENT || n12 < MIN_COEFFICIENT {
        return Err(Outage::new("phase-two source row vanishes"));
    }
    let s = (power / symbol_power).sqrt();
    Ok([s / n21, s / n12])
}

impl DcsisGains {
    pub fn new(channel: &BlockChannelState, power: f64, noise: &NoiseConfig) -> Result<Self, Outage> {
        let symbol_power = power;
        let b = compute_b(&channel.g[0], &channel.h[0], &channel.h[1]);
        Ok(DcsisGains {
            symbol_power,
            relay_phase1: relay_phase1_gain(power, symbol_power, noise),
            source_phase2: source_phase2_gains(&b, power, symbol_power)?,
            relay_phase2: relay_phase2_gain(power, noise),
        })
    }
}

/// Phase one of hop one. Returns `[[X_S1(1), X_S1(2)], [X_S2(1), X_S2(2)]]`.
pub fn encode_phase1_hop1(u: &SymbolPair, v: &SymbolPair) -> [[Complex64; 2]; 2] {
    [u.as_array(), v.as_array()]
}

/// Phase one of hop two. `received[i]` holds `(Y_Ri(1), Y_Ri(2))`.
pub fn relay_phase1_hop2(received: [[Complex64; 2]; 2], gain: f64) -> [Complex64; 2] {
    received.map(|y| (y[0] + y[1]) * gain)
}

/// Phase two of hop one: `X_S1(3) = g1 B21 u`, `X_S2(3) = g2 B12 v`.
/// Returns the two samples and the gains applied.
pub fn encode_phase2_hop1(
    u: &SymbolPair,
    v: &SymbolPair,
    b: &BMatrixSet,
    power: f64,
    symbol_power: f64,
) -> Result<([Complex64; 2], [f64; 2]), Outage> {
    let gains = source_phase2_gains(b, power, symbol_power)?;
    Ok((phase2_samples(u, v, b, gains), gains))
}

fn phase2_samples(u: &SymbolPair, v: &SymbolPair, b: &BMatrixSet, gains: [f64; 2]) -> [Complex64; 2] {
    [u.dot(&b.b21) * gains[0], v.dot(&b.b12) * gains[1]]
}

/// Phase two of hop two. Returns the relay pairs for second-hop slots 2 and 3.
pub fn relay_phase2_hop2(y3: [Complex64; 2], gain: f64) -> [[Complex64; 2]; 2] {
    [[y3[0] * gain, silent()], [silent(), y3[1] * gain]]
}

/// Runs all four phases over `channel`. Relay operations see only their own
/// received samples and the statistical gains.
pub(crate) fn transmit(
    channel: &BlockChannelState,
    gains: &DcsisGains,
    u: &SymbolPair,
    v: &SymbolPair,
    noise: &NoiseSamples,
    mut ledger: Option<&mut Ledger>,
) -> Signals {
    let mut record = |hop, slot, phase: &str| ledger.as_mut().map(|l| l.channel_use(hop, slot, phase));
    let mut s = Signals::zero();

    let x = encode_phase1_hop1(u, v);
    for t in 1..=2 {
        s.set_source(t, [x[0][t - 1], x[1][t - 1]]);
        s.first_hop(channel, noise, t);
        record(Hop::First, t as u8, "phase one of hop one");
    }

    let received = [0, 1].map(|i| [s.relay_rx[i][0], s.relay_rx[i][1]]);
    s.set_relay_tx(1, relay_phase1_hop2(received, gains.relay_phase1));
    s.second_hop(channel, noise, 1);
    record(Hop::Second, 1, "phase one of hop two");

    // Sources now hold H(1), H(2) and G(1) through delayed feedback.
    let b = compute_b(&channel.g[0], &channel.h[0], &channel.h[1]);
    s.set_source(3, phase2_samples(u, v, &b, gains.source_phase2));
    s.first_hop(channel, noise, 3);
    let seq3 = record(Hop::First, 3, "phase two of hop one");

    let fwd = relay_phase2_hop2([s.relay_rx[0][2], s.relay_rx[1][2]], gains.relay_phase2);
    s.set_relay_tx(2, fwd[0]);
    s.second_hop(channel, noise, 2);
    record(Hop::Second, 2, "phase two of hop two");
    s.set_relay_tx(3, fwd[1]);
    s.second_hop(channel, noise, 3);
    record(Hop::Second, 3, "phase two of hop two");

    if let (Some(l), Some(seq3)) = (ledger, seq3) {
        let stale = vec![
            Knowledge::Coefficients { hop: Hop::First, slot: 1 },
            Knowledge::Coefficients { hop: Hop::First, slot: 2 },
            Knowledge::Coefficients { hop: Hop::Second, slot: 1 },
        ];
        l.access(seq3, Node::Source(1), stale.clone());
        l.access(seq3, Node::Source(2), stale);
        for (seq, relay) in [(2, 1), (2, 2), (4, 1), (5, 2)] {
            l.access(seq, Node::Relay(relay), Vec::new());
        }
        for seq in [0, 1] {
            l.access(seq, Node::Source(1), Vec::new());
            l.access(seq, Node::Source(2), Vec::new());
        }
    }
    s
}

pub(crate) fn replay(
    channel: &BlockChannelState,
    gains: &DcsisGains,
    symbols: &[Complex64],
    noise: &NoiseSamples,
) -> Signals {
    let u = SymbolPair::new(symbols[0], symbols[1]);
    let v = SymbolPair::new(symbols[2], symbols[3]);
    transmit(channel, gains, &u, &v, noise, None)
}

/// Destination processing up to the final 2x2 solve.
///
/// Recovers `Y_R1(3)` and `Y_R2(3)` from second-hop slots 2 and 3, inverts
/// `H(3)` for `B21 u` and `B12 v`, strips the interference from `Y_D(1)` and
/// stacks the two desired rows.
pub fn front_end(
    which: usize,
    y: [Complex64; 3],
    channel: &BlockChannelState,
    gains: &DcsisGains,
    cond_threshold: f64,
) -> Result<Processed, Outage> {
    let d = which - 1;
    let r1 = checked_div(y[1], channel.g[1][(d, 0)] * gains.relay_phase2, "second-hop slot 2 coefficient")?;
    let r2 = checked_div(y[2], channel.g[2][(d, 1)] * gains.relay_phase2, "second-hop slot 3 coefficient")?;
    let w = linalg::solve_with_threshold(&channel.h[2], &CVector::from([r1, r2]), cond_threshold)
        .map_err(|e| Outage::from_linalg("first-hop slot 3 channel", e))?;
    if gains.source_phase2.iter().any(|&g| g <= 0.0) {
        return Err(Outage::new("phase-two source gain unavailable"));
    }
    let b21u = w[0] / gains.source_phase2[0];
    let b12v = w[1] / gains.source_phase2[1];
    let b = compute_b(&channel.g[0], &channel.h[0], &channel.h[1]);
    let y1 = y[0] / gains.relay_phase1;
    let (stack, obs) = match which {
        1 => (b.stack_u(), [y1 - b12v, b21u]),
        2 => (CMatrix::from_rows(&[b.b22, b.b12]), [y1 - b21u, b12v]),
        _ => panic!("destination index must be 1 or 2"),
    };
    Ok(Processed {
        stack,
        obs: CVector::from(obs),
    })
}

/// Zero-forcing estimate of destination `which`'s two symbols.
pub fn decode_destination(
    which: usize,
    y: [Complex64; 3],
    channel: &BlockChannelState,
    gains: &DcsisGains,
    cond_threshold: f64,
) -> Result<SymbolPair, Outage> {
    let p = front_end(which, y, channel, gains, cond_threshold)?;
    Ok(SymbolPair::from(&p.solve(cond_threshold)?))
}

/// Condition numbers of every matrix the scheme inverts.
pub fn conditions(channel: &BlockChannelState) -> Vec<ConditionRecord> {
    let b = compute_b(&channel.g[0], &channel.h[0], &channel.h[1]);
    vec![
        ConditionRecord::new("b11_b21", condition_of(&b.stack_u())),
        ConditionRecord::new("b12_b22", condition_of(&b.stack_v())),
        ConditionRecord::new("h3", condition_of(&channel.h[2])),
    ]
}

/// Simulates one block with explicit inputs.
pub fn simulate(
    channel: BlockChannelState,
    u: SymbolPair,
    v: SymbolPair,
    noise_samples: NoiseSamples,
    params: &SimParams,
) -> BlockTrace {
    let conditions = conditions(&channel);
    let mut outage = conditions
        .iter()
        .find(|c| c.value > params.cond_threshold)
        .map(|c| Outage {
            reason: format!("{} is singular", c.label),
            cond: Some(c.value),
        });
    if outage.is_none() {
        for d in 0..2 {
            if channel.g[1][(d, 0)].norm() < MIN_COEFFICIENT || channel.g[2][(d, 1)].norm() < MIN_COEFFICIENT {
                outage = Some(Outage::new("forwarding coefficient is zero"));
            }
        }
    }
    let gains = match DcsisGains::new(&channel, params.power, &params.noise) {
        Ok(g) => g,
        Err(e) => {
            outage.get_or_insert(e);
            DcsisGains {
                symbol_power: params.power,
                relay_phase1: relay_phase1_gain(params.power, params.power, &params.noise),
                source_phase2: [0.0, 0.0],
                relay_phase2: relay_phase2_gain(params.power, &params.noise),
            }
        }
    };
    let mut ledger = Ledger::new(4);
    let signals = transmit(&channel, &gains, &u, &v, &noise_samples, Some(&mut ledger));
    BlockTrace {
        scheme: SchemeId::Dcsis,
        power: params.power,
        noise: params.noise,
        cond_threshold: params.cond_threshold,
        channel,
        symbols: vec![u.s1, u.s2, v.s1, v.s2],
        noise_samples,
        gains: Gains::Dcsis(gains),
        signals,
        outage,
        conditions,
        ledger,
    }
}

/// Draws channel, symbols and noise from the block's streams and runs the scheme.
pub fn run_block(streams: BlockStreams, params: &SimParams) -> BlockTrace {
    let channel = draw_block_channels(streams.stream(Purpose::Channel));
    let mut rng = streams.stream(Purpose::Symbols).rng();
    let u = SymbolPair::draw(&mut rng, params.power);
    let v = SymbolPair::draw(&mut rng, params.power);
    let noise = NoiseSamples::draw(&params.noise, streams.stream(Purpose::Noise));
    simulate(channel, u, v, noise, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RngStream;
    use crate::ledger::InformationModel;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn hand_channel(g1: CMatrix) -> BlockChannelState {
        // H_11(1..2) = (1,2), H_21 = (3,4), H_12 = (5,6), H_22 = (7,8).
        let h1 = CMatrix::from_real_rows(&[[1.0, 5.0], [3.0, 7.0]]);
        let h2 = CMatrix::from_real_rows(&[[2.0, 6.0], [4.0, 8.0]]);
        let h3 = CMatrix::from_real_rows(&[[2.0, 1.0], [1.0, 3.0]]);
        let g23 = CMatrix::from_real_rows(&[[1.0, 2.0], [3.0, 1.0]]);
        BlockChannelState::new([h1, h2, h3], [g1, g23.clone(), g23])
    }

    #[test]
    fn compute_b_identity_g_selects_rows() {
        let ch = hand_channel(CMatrix::identity(2));
        let b = compute_b(&ch.g[0], &ch.h[0], &ch.h[1]);
        assert_eq!(b.b11, [c(1.0), c(2.0)]);
        assert_eq!(b.b12, [c(5.0), c(6.0)]);
        assert_eq!(b.b21, [c(3.0), c(4.0)]);
        assert_eq!(b.b22, [c(7.0), c(8.0)]);
    }

    #[test]
    fn compute_b_all_ones_g_gives_equal_rows() {
        let ch = hand_channel(CMatrix::from_real_rows(&[[1.0, 1.0], [1.0, 1.0]]));
        let b = compute_b(&ch.g[0], &ch.h[0], &ch.h[1]);
        assert_eq!(b.b11, [c(4.0), c(6.0)]);
        assert_eq!(b.b21, [c(4.0), c(6.0)]);
        assert_eq!(linalg::det(&b.stack_u()).unwrap(), c(0.0));
    }

    #[test]
    fn compute_b_matches_diagonal_stacking_definition() {
        // B_i1 = G_i1(1) e^T diag(H_11(1), H_11(2)) + G_i2(1) e^T diag(H_21(1), H_21(2))
        let ch = draw_block_channels(RngStream::new(5, 11));
        let b = compute_b(&ch.g[0], &ch.h[0], &ch.h[1]);
        let e = CMatrix::from_real_rows(&[[1.0, 1.0]]);
        let hbar = |i: usize, j: usize| CMatrix::diag(&[ch.h_at(i, j, 1), ch.h_at(i, j, 2)]);
        for (i, j, got) in [(1, 1, b.b11), (1, 2, b.b12), (2, 1, b.b21), (2, 2, b.b22)] {
            let row = e
                .matmul(&hbar(1, j))
                .scale(ch.g_at(i, 1, 1))
                .add(&e.matmul(&hbar(2, j)).scale(ch.g_at(i, 2, 1)));
            assert_eq!(row.row(0), &got[..]);
        }
    }

    #[test]
    fn phase_one_encoding_and_forwarding() {
        let u = SymbolPair::new(c(1.0), c(2.0));
        let v = SymbolPair::new(c(3.0), c(4.0));
        assert_eq!(encode_phase1_hop1(&u, &v), [[c(1.0), c(2.0)], [c(3.0), c(4.0)]]);
        assert_eq!(encode_phase1_hop1(&SymbolPair::zero(), &SymbolPair::zero()), [[c(0.0); 2]; 2]);
        let out = relay_phase1_hop2([[Complex64::new(1.0, 1.0), c(2.0)], [c(0.0), c(0.0)]], 1.0);
        assert_eq!(out, [Complex64::new(3.0, 1.0), c(0.0)]);
    }

    #[test]
    fn phase_two_encoding() {
        let b = BMatrixSet {
            b11: [c(1.0), c(0.0)],
            b12: [c(0.0), c(1.0)],
            b21: [c(1.0), c(0.0)],
            b22: [c(1.0), c(1.0)],
        };
        let u = SymbolPair::new(c(5.0), c(7.0));
        let (x, g) = encode_phase2_hop1(&u, &SymbolPair::zero(), &b, 1.0, 1.0).unwrap();
        assert_eq!(x[0], c(5.0));
        assert_eq!(g, [1.0, 1.0]);

        let degenerate = BMatrixSet { b12: [c(0.0); 2], ..b };
        assert!(encode_phase2_hop1(&u, &u, &degenerate, 1.0, 1.0).is_err());
    }

    #[test]
    fn phase_two_forwarding_alternates_relays() {
        let y = [Complex64::new(2.0, 1.0), c(-1.0)];
        let out = relay_phase2_hop2(y, 1.0);
        assert_eq!(out[0], [Complex64::new(2.0, 1.0), c(0.0)]);
        assert_eq!(out[1], [c(0.0), c(-1.0)]);
        assert_eq!(relay_phase2_hop2([c(0.0); 2], 3.0), [[c(0.0); 2]; 2]);
    }

    #[test]
    fn hand_traced_block_decodes_exactly() {
        let ch = hand_channel(CMatrix::identity(2));
        let u = SymbolPair::new(c(1.0), Complex64::new(-2.0, 0.5));
        let v = SymbolPair::new(Complex64::new(0.0, 3.0), c(4.0));
        let params = SimParams::new(1.0, NoiseConfig::off());
        let trace = simulate(ch, u, v, NoiseSamples::zero(), &params);
        assert!(!trace.is_outage());
        let Gains::Dcsis(g) = &trace.gains else { unreachable!() };
        // Y_D1(1) = g1 (B11 u + B12 v) with B rows from the identity-G example.
        let expected = (c(1.0) * u.s1 + c(2.0) * u.s2 + c(5.0) * v.s1 + c(6.0) * v.s2) * g.relay_phase1;
        assert!((trace.signals.dest_rx[0][0] - expected).norm() < 1e-12);
        for (dest, want) in [(1, u), (2, v)] {
            let got = decode_destination(dest, trace.signals.dest_rx[dest - 1], &trace.channel, g, 1e8).unwrap();
            assert!((got.s1 - want.s1).norm() < 1e-10 && (got.s2 - want.s2).norm() < 1e-10);
        }
    }

    #[test]
    fn all_ones_g_is_outage() {
        let ch = hand_channel(CMatrix::from_real_rows(&[[1.0, 1.0], [1.0, 1.0]]));
        let trace = simulate(
            ch,
            SymbolPair::new(c(1.0), c(1.0)),
            SymbolPair::new(c(1.0), c(1.0)),
            NoiseSamples::zero(),
            &SimParams::new(1.0, NoiseConfig::off()),
        );
        assert!(trace.is_outage());
        assert!(SchemeId::Dcsis.decode(&trace, 1).is_err());
    }

    #[test]
    fn ledger_respects_delayed_csi() {
        let t = run_block(BlockStreams::new(1, 0), &SimParams::new(10.0, NoiseConfig::unit()));
        t.ledger.audit(InformationModel::DelayedCsiAtSources).unwrap();
        assert_eq!(t.ledger.symbols_per_block, 4);
        assert!(t.is_replay_consistent());
    }
}
