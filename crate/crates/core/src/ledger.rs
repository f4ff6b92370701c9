//! Block schedule ledger: which channel uses happened in which order and what
//! each transmitting node knew when it formed its signal.
//!
//! The ledger is filled by the block schedulers and audited against the
//! information model of each scheme, so causality violations (a source using a
//! coefficient that has not been fed back yet, a CSI-free relay touching a
//! coefficient) surface as test failures rather than silent optimism.

use serde::{Deserialize, Serialize};

use crate::channel::SLOTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hop {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Source(u8),
    Relay(u8),
}

/// A piece of side information a node used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Knowledge {
    /// All coefficients of `hop` at 1-based `slot`.
    Coefficients { hop: Hop, slot: u8 },
    /// Destination `dest`'s received sample at second-hop `slot`.
    DestOutput { dest: u8, slot: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelUse {
    pub seq: u32,
    pub hop: Hop,
    pub slot: u8,
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    /// Sequence number of the channel use on which the node transmits.
    pub seq: u32,
    pub node: Node,
    pub knows: Vec<Knowledge>,
}

/// Side-information model a ledger is audited against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformationModel {
    /// Sources learn every coefficient one use after it occurs; relays know nothing.
    DelayedCsiAtSources,
    /// Sources know nothing; relays know the first hop instantly, the second
    /// hop after it occurs and their own destination's output after it occurs.
    LimitedShannonFeedback,
    /// Sources know nothing; relays know the first hop instantly.
    RelayFirstHopOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub uses: Vec<ChannelUse>,
    pub accesses: Vec<Access>,
    pub symbols_per_block: u32,
}

impl Ledger {
    pub fn new(symbols_per_block: u32) -> Self {
        Ledger {
            symbols_per_block,
            ..Default::default()
        }
    }

    /// Records a channel use and returns its sequence number.
    pub fn channel_use(&mut self, hop: Hop, slot: u8, phase: &str) -> u32 {
        let seq = self.uses.len() as u32;
        self.uses.push(ChannelUse {
            seq,
            hop,
            slot,
            phase: phase.to_owned(),
        });
        seq
    }

    pub fn access(&mut self, seq: u32, node: Node, knows: Vec<Knowledge>) {
        self.accesses.push(Access { seq, node, knows });
    }

    fn seq_of(&self, hop: Hop, slot: u8) -> Option<u32> {
        self.uses.iter().find(|u| u.hop == hop && u.slot == slot).map(|u| u.seq)
    }

    pub fn uses_on(&self, hop: Hop) -> usize {
        self.uses.iter().filter(|u| u.hop == hop).count()
    }

    /// Symbols delivered per channel use of each hop.
    pub fn dof(&self) -> f64 {
        self.symbols_per_block as f64 / SLOTS as f64
    }

    /// Checks slot accounting and every recorded access against `model`.
    pub fn audit(&self, model: InformationModel) -> Result<(), String> {
        for hop in [Hop::First, Hop::Second] {
            if self.uses_on(hop) != SLOTS {
                return Err(format!("{hop:?} hop used {} times, expected {SLOTS}", self.uses_on(hop)));
            }
            for slot in 1..=SLOTS as u8 {
                if self.seq_of(hop, slot).is_none() {
                    return Err(format!("{hop:?} hop slot {slot} never used"));
                }
            }
        }
        for a in &self.accesses {
            for k in &a.knows {
                self.check(model, a, k)?;
            }
        }
        Ok(())
    }

    fn check(&self, model: InformationModel, a: &Access, k: &Knowledge) -> Result<(), String> {
        let stale = |hop: Hop, slot: u8| -> Result<(), String> {
            match self.seq_of(hop, slot) {
                Some(s) if s < a.seq => Ok(()),
                _ => Err(format!(
                    "{:?} at use {} relies on {hop:?}-hop slot {slot} before it has been fed back",
                    a.node, a.seq
                )),
            }
        };
        let denied = || Err(format!("{:?} at use {} may not know {k:?}", a.node, a.seq));
        match (model, a.node, *k) {
            (InformationModel::DelayedCsiAtSources, Node::Source(_), Knowledge::Coefficients { hop, slot }) => {
                stale(hop, slot)
            }
            (InformationModel::DelayedCsiAtSources, _, _) => denied(),
            (InformationModel::LimitedShannonFeedback | InformationModel::RelayFirstHopOnly, Node::Source(_), _) => {
                denied()
            }
            (
                InformationModel::LimitedShannonFeedback | InformationModel::RelayFirstHopOnly,
                Node::Relay(_),
                Knowledge::Coefficients { hop: Hop::First, .. },
            ) => Ok(()),
            (
                InformationModel::LimitedShannonFeedback,
                Node::Relay(_),
                Knowledge::Coefficients {
                    hop: Hop::Second,
                    slot,
                },
            ) => stale(Hop::Second, slot),
            (InformationModel::LimitedShannonFeedback, Node::Relay(r), Knowledge::DestOutput { dest, slot }) => {
                if dest != r {
                    return denied();
                }
                stale(Hop::Second, slot)
            }
            (InformationModel::RelayFirstHopOnly, Node::Relay(_), _) => denied(),
        }
    }
}
