//! Simulation and verification of feedback-limited interference alignment
//! over the layered two-hop, two-user Gaussian network (two sources, two
//! relays, two destinations).
//!
//! * [`channel`]: Rayleigh block fading, Gaussian noise, counter-based RNG streams.
//! * [`dcsis`]: retrospective alignment with delayed CSI at the sources.
//! * [`lsf`]: retro-cooperative alignment with limited Shannon feedback to the relays.
//! * [`baseline`]: time-sharing reference.
//! * [`rate`]: effective observation models, Gaussian mutual information, slope fits.
//! * [`experiment`]: seeded Monte Carlo sweeps, verification runs, CSV/JSON output.

pub mod baseline;
pub mod channel;
pub mod dcsis;
pub mod experiment;
pub mod ledger;
pub mod linalg;
pub mod lsf;
pub mod rate;
pub mod scheme;

pub use channel::{BlockChannelState, BlockStreams, NoiseConfig, NoiseSamples, RngStream};
pub use linalg::{CMatrix, CVector};
pub use scheme::{BlockTrace, Outage, SchemeId, SimParams, SymbolPair};
