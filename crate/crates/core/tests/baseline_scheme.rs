use num_complex::Complex64;
use twohop_ia::baseline::{self, active_source, run_block_tdma};
use twohop_ia::channel::{BlockChannelState, BlockStreams, NoiseConfig, NoiseSamples};
use twohop_ia::ledger::{Hop, InformationModel};
use twohop_ia::linalg::CMatrix;
use twohop_ia::scheme::Gains;
use twohop_ia::{SchemeId, SimParams};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn identity_channels_recover_all_three_symbols() {
    let ch = BlockChannelState::constant(CMatrix::identity(2), CMatrix::identity(2));
    let symbols = [c(1.0, -0.5), c(-2.0, 0.25), c(0.0, 3.0)];
    let t = baseline::simulate(ch, symbols, NoiseSamples::zero(), &SimParams::new(1.0, NoiseConfig::off()));
    assert!(!t.is_outage());
    assert_eq!(SchemeId::Tdma.decode(&t, 1).unwrap().as_slice(), &[symbols[0], symbols[2]]);
    assert_eq!(SchemeId::Tdma.decode(&t, 2).unwrap().as_slice(), &[symbols[1]]);
}

#[test]
fn three_symbols_over_three_uses() {
    let t = run_block_tdma(BlockStreams::new(1, 0), &SimParams::from_db(20.0, NoiseConfig::unit()));
    assert_eq!(t.ledger.uses_on(Hop::First), 3);
    assert_eq!(t.ledger.uses_on(Hop::Second), 3);
    assert_eq!(t.ledger.dof(), 1.0);
    t.ledger.audit(InformationModel::RelayFirstHopOnly).unwrap();
}

#[test]
fn one_source_and_one_relay_per_slot() {
    assert_eq!([1, 2, 3].map(active_source), [1, 2, 1]);
    let params = SimParams::new(2.0, NoiseConfig::off());
    for blk in 0..1000 {
        let t = run_block_tdma(BlockStreams::new(2, blk), &params);
        let Gains::Tdma(g) = &t.gains else { unreachable!() };
        for slot in 0..3 {
            let active = active_source(slot + 1) - 1;
            assert_eq!(t.signals.source_tx[1 - active][slot], c(0.0, 0.0));
            let r = g.forwarder[slot] as usize - 1;
            assert_eq!(t.signals.relay_tx[1 - r][slot], c(0.0, 0.0));
            // forwarder is the relay with the stronger incoming coefficient
            let h = |relay: usize| t.channel.h_at(relay, active + 1, slot + 1).norm();
            assert!(h(r + 1) >= h(2 - r));
        }
    }
}

#[test]
fn noiseless_random_blocks_recover_exactly() {
    let params = SimParams::new(1.0, NoiseConfig::off());
    for blk in 0..10_000 {
        let t = run_block_tdma(BlockStreams::new(3, blk), &params);
        assert!(!t.is_outage());
        for dest in 1..=2 {
            let want = t.desired_symbols(dest);
            let got = SchemeId::Tdma.decode(&t, dest).unwrap();
            assert!(got.sub(&want).norm() <= 1e-12 * want.norm());
        }
        assert!(t.is_replay_consistent());
    }
}

#[test]
fn vanishing_second_hop_coefficient_is_an_outage() {
    let ch = BlockChannelState::constant(CMatrix::identity(2), CMatrix::zeros(2, 2));
    let t = baseline::simulate(ch, [c(1.0, 0.0); 3], NoiseSamples::zero(), &SimParams::new(1.0, NoiseConfig::off()));
    assert!(t.is_outage());
    let ch = BlockChannelState::constant(CMatrix::zeros(2, 2), CMatrix::identity(2));
    assert!(baseline::simulate(ch, [c(1.0, 0.0); 3], NoiseSamples::zero(), &SimParams::new(1.0, NoiseConfig::off())).is_outage());
}

#[test]
fn relay_output_power_is_normalised() {
    let params = SimParams::new(1.0, NoiseConfig::unit());
    let n = 50_000u64;
    let mut total = 0.0;
    for blk in 0..n {
        let t = run_block_tdma(BlockStreams::new(4, blk), &params);
        total += (0..3).map(|s| t.signals.relay_tx[0][s].norm_sqr() + t.signals.relay_tx[1][s].norm_sqr()).sum::<f64>();
    }
    let per_slot = total / (3.0 * n as f64);
    assert!((per_slot - 1.0).abs() < 0.02, "{per_slot}");
}
