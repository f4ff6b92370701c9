//! Interference-free time-sharing reference with one data symbol per slot.
//!
//! First-hop slot `t` carries one symbol from a single source (source 1,
//! then 2, then 1). Both relays hear it; the relay with the stronger incoming
//! coefficient decodes it and forwards it in second-hop slot `t` while the
//! other relay stays silent. Three symbols per three uses of each hop.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    complex_normal, draw_block_channels, silent, BlockChannelState, BlockStreams, NoiseSamples, Purpose, SLOTS,
};
use crate::ledger::{Hop, Knowledge, Ledger, Node};
use crate::linalg::{CMatrix, CVector};
use crate::scheme::{
    checked_div, BlockTrace, ConditionRecord, Gains, Outage, Processed, SchemeId, Signals, SimParams, MIN_COEFFICIENT,
};

/// Source (1-based) active in slot `t` (1-based).
pub fn active_source(t: usize) -> usize {
    if t % 2 == 1 {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdmaGains {
    pub symbol_power: f64,
    /// Forwarding relay (1-based) per slot.
    pub forwarder: [u8; SLOTS],
    /// Forwarding gain per slot, normalising `E|x_hat|^2 = P + sigma^2 / |H|^2` to `P`.
    pub relay: [f64; SLOTS],
}

impl TdmaGains {
    pub fn new(channel: &BlockChannelState, params: &SimParams) -> Result<Self, Outage> {
        let mut forwarder = [1u8; SLOTS];
        let mut relay = [0.0; SLOTS];
        for t in 1..=SLOTS {
            let s = active_source(t);
            let (r, h) = strongest_relay(channel, s, t);
            if h.norm() < MIN_COEFFICIENT {
                return Err(Outage::new(format!("no usable relay in slot {t}")));
            }
            forwarder[t - 1] = r as u8;
            relay[t - 1] = (params.power / (params.power + params.noise.power() / h.norm_sqr())).sqrt();
        }
        Ok(TdmaGains {
            symbol_power: params.power,
            forwarder,
            relay,
        })
    }
}

fn strongest_relay(channel: &BlockChannelState, source: usize, t: usize) -> (usize, Complex64) {
    let h1 = channel.h_at(1, source, t);
    let h2 = channel.h_at(2, source, t);
    if h2.norm() > h1.norm() {
        (2, h2)
    } else {
        (1, h1)
    }
}

pub(crate) fn transmit(
    channel: &BlockChannelState,
    gains: &TdmaGains,
    symbols: &[Complex64],
    noise: &NoiseSamples,
    mut ledger: Option<&mut Ledger>,
) -> Signals {
    let mut s = Signals::zero();
    for t in 1..=SLOTS {
        let mut x = [silent(); 2];
        x[active_source(t) - 1] = symbols[t - 1];
        s.set_source(t, x);
        s.first_hop(channel, noise, t);
        if let Some(l) = ledger.as_mut() {
            l.channel_use(Hop::First, t as u8, "single source");
        }
    }
    for t in 1..=SLOTS {
        let r = gains.forwarder[t - 1] as usize;
        let h = channel.h_at(r, active_source(t), t);
        // Gains guarantee |h| is above the outage floor.
        let x_hat = s.relay_rx[r - 1][t - 1] / h;
        let mut x = [silent(); 2];
        x[r - 1] = x_hat * gains.relay[t - 1];
        s.set_relay_tx(t, x);
        s.second_hop(channel, noise, t);
        if let Some(l) = ledger.as_mut() {
            let seq = l.channel_use(Hop::Second, t as u8, "selected relay forwards");
            l.access(seq, Node::Relay(r as u8), vec![Knowledge::Coefficients { hop: Hop::First, slot: t as u8 }]);
        }
    }
    s
}

pub(crate) fn replay(
    channel: &BlockChannelState,
    gains: &TdmaGains,
    symbols: &[Complex64],
    noise: &NoiseSamples,
) -> Signals {
    transmit(channel, gains, symbols, noise, None)
}

/// Scales each slot's received sample back to the symbol it carries.
pub fn front_end(
    which: usize,
    y: [Complex64; 3],
    channel: &BlockChannelState,
    gains: &TdmaGains,
) -> Result<Processed, Outage> {
    let slots: Vec<usize> = (1..=SLOTS).filter(|&t| active_source(t) == which).collect();
    let mut obs = Vec::with_capacity(slots.len());
    for &t in &slots {
        let r = gains.forwarder[t - 1] as usize;
        let coef = channel.g_at(which, r, t) * gains.relay[t - 1];
        obs.push(checked_div(y[t - 1], coef, "forwarding coefficient")?);
    }
    Ok(Processed {
        stack: CMatrix::identity(slots.len()),
        obs: CVector::new(obs),
    })
}

pub fn simulate(
    channel: BlockChannelState,
    symbols: [Complex64; SLOTS],
    noise_samples: NoiseSamples,
    params: &SimParams,
) -> BlockTrace {
    let mut outage = None;
    let gains = match TdmaGains::new(&channel, params) {
        Ok(g) => g,
        Err(e) => {
            outage = Some(e);
            TdmaGains {
                symbol_power: params.power,
                forwarder: [1; SLOTS],
                relay: [0.0; SLOTS],
            }
        }
    };
    let mut conditions = Vec::new();
    for t in 1..=SLOTS {
        let r = gains.forwarder[t - 1] as usize;
        let h = channel.h_at(r, active_source(t), t).norm();
        let g = channel.g_at(active_source(t), r, t).norm();
        if outage.is_none() && g < MIN_COEFFICIENT {
            outage = Some(Outage::new(format!("second-hop slot {t} coefficient is zero")));
        }
        conditions.push(ConditionRecord::new(&format!("slot{t}_first_hop"), 1.0 / h));
        conditions.push(ConditionRecord::new(&format!("slot{t}_second_hop"), 1.0 / g));
    }
    let mut ledger = Ledger::new(SLOTS as u32);
    let signals = if outage.is_none() {
        transmit(&channel, &gains, &symbols, &noise_samples, Some(&mut ledger))
    } else {
        let mut s = Signals::zero();
        for t in 1..=SLOTS {
            let mut x = [silent(); 2];
            x[active_source(t) - 1] = symbols[t - 1];
            s.set_source(t, x);
            s.first_hop(&channel, &noise_samples, t);
            ledger.channel_use(Hop::First, t as u8, "single source");
        }
        for t in 1..=SLOTS {
            s.second_hop(&channel, &noise_samples, t);
            ledger.channel_use(Hop::Second, t as u8, "silent");
        }
        s
    };
    BlockTrace {
        scheme: SchemeId::Tdma,
        power: params.power,
        noise: params.noise,
        cond_threshold: params.cond_threshold,
        channel,
        symbols: symbols.to_vec(),
        noise_samples,
        gains: Gains::Tdma(gains),
        signals,
        outage,
        conditions,
        ledger,
    }
}

pub fn run_block_tdma(streams: BlockStreams, params: &SimParams) -> BlockTrace {
    let channel = draw_block_channels(streams.stream(Purpose::Channel));
    let mut rng = streams.stream(Purpose::Symbols).rng();
    let scale = params.power.sqrt();
    let symbols = [(); SLOTS].map(|_| complex_normal(&mut rng) * scale);
    let noise = NoiseSamples::draw(&params.noise, streams.stream(Purpose::Noise));
    simulate(channel, symbols, noise, params)
}
