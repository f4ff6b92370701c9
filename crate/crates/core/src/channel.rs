//! Rayleigh block fading, additive Gaussian noise and the per-hop channel law.
//!
//! Randomness is counter based: every block owns a set of independent ChaCha
//! streams keyed by `(master_seed, stream_id)`, so any trial can be generated
//! in isolation and parallel schedules reproduce sequential runs bit for bit.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::CMatrix;

/// Number of channel uses per hop in one block.
pub const SLOTS: usize = 3;

/// What a random stream is used for within a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Channel = 0,
    Symbols = 1,
    Noise = 2,
}

const PURPOSES_PER_BLOCK: u64 = 4;

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream {
            master_seed,
            stream_id,
        }
    }

    /// Stream for `purpose` within block number `block`.
    pub fn for_block(master_seed: u64, block: u64, purpose: Purpose) -> Self {
        RngStream::new(master_seed, block * PURPOSES_PER_BLOCK + purpose as u64)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// The three per-purpose streams of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockStreams {
    pub master_seed: u64,
    pub block: u64,
}

impl BlockStreams {
    pub fn new(master_seed: u64, block: u64) -> Self {
        BlockStreams { master_seed, block }
    }

    pub fn stream(&self, purpose: Purpose) -> RngStream {
        RngStream::for_block(self.master_seed, self.block, purpose)
    }
}

/// One circularly-symmetric CN(0,1) sample: real and imaginary parts are each N(0, 1/2).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// All fading coefficients of one block: `h[t]` is the first hop at slot `t+1`
/// (`h[t][(i, j)]` couples source `j` into relay `i`), `g[t]` the second hop
/// (`g[t][(i, j)]` couples relay `j` into destination `i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockChannelState {
    pub h: [CMatrix; SLOTS],
    pub g: [CMatrix; SLOTS],
}

impl BlockChannelState {
    pub fn new(h: [CMatrix; SLOTS], g: [CMatrix; SLOTS]) -> Self {
        for m in h.iter().chain(g.iter()) {
            assert!(m.rows() == 2 && m.cols() == 2, "channel matrices are 2x2");
            assert!(m.is_finite(), "channel coefficients must be finite");
        }
        BlockChannelState { h, g }
    }

    /// Same matrix on every slot of both hops.
    pub fn constant(h: CMatrix, g: CMatrix) -> Self {
        Self::new(
            [h.clone(), h.clone(), h],
            [g.clone(), g.clone(), g],
        )
    }

    /// First-hop coefficient `H_ij(t)` with 1-based indices.
    pub fn h_at(&self, i: usize, j: usize, t: usize) -> Complex64 {
        self.h[t - 1][(i - 1, j - 1)]
    }

    /// Second-hop coefficient `G_ij(t)` with 1-based indices.
    pub fn g_at(&self, i: usize, j: usize, t: usize) -> Complex64 {
        self.g[t - 1][(i - 1, j - 1)]
    }

    /// The 24 coefficients in generation order: hop (H then G), slot, row, column.
    pub fn coefficients(&self) -> Vec<Complex64> {
        self.h
            .iter()
            .chain(self.g.iter())
            .flat_map(|m| m.as_slice().iter().copied())
            .collect()
    }

    /// Inverse of [`coefficients`](Self::coefficients).
    pub fn from_coefficients(c: &[Complex64]) -> Self {
        assert_eq!(c.len(), 4 * 2 * SLOTS, "expected 24 coefficients");
        let m = |k: usize| CMatrix::from_row_major(2, 2, c[4 * k..4 * k + 4].to_vec()).expect("finite 2x2");
        Self::new([m(0), m(1), m(2)], [m(3), m(4), m(5)])
    }

    /// Text fixture format: one line per coefficient,
    /// `hop slot row col re im` with 1-based indices and shortest round-trip floats.
    pub fn to_fixture_text(&self) -> String {
        let mut out = String::new();
        for (hop, mats) in [("H", &self.h), ("G", &self.g)] {
            for (t, m) in mats.iter().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        let z = m[(i, j)];
                        writeln!(out, "{hop} {} {} {} {:?} {:?}", t + 1, i + 1, j + 1, z.re, z.im)
                            .expect("write to string");
                    }
                }
            }
        }
        out
    }

    pub fn from_fixture_text(text: &str) -> Result<Self, String> {
        let mut coeffs = Vec::with_capacity(24);
        for (n, line) in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(format!("line {}: expected 6 fields", n + 1));
            }
            let re: f64 = f[4].parse().map_err(|e| format!("line {}: {e}", n + 1))?;
            let im: f64 = f[5].parse().map_err(|e| format!("line {}: {e}", n + 1))?;
            coeffs.push(Complex64::new(re, im));
        }
        if coeffs.len() != 24 {
            return Err(format!("expected 24 coefficients, found {}", coeffs.len()));
        }
        Ok(Self::from_coefficients(&coeffs))
    }
}

/// Draws 24 i.i.d. CN(0,1) coefficients in the order hop, slot, row, column.
pub fn draw_block_channels(stream: RngStream) -> BlockChannelState {
    let mut rng = stream.rng();
    let coeffs: Vec<Complex64> = (0..24).map(|_| complex_normal(&mut rng)).collect();
    BlockChannelState::from_coefficients(&coeffs)
}

/// Additive noise configuration. `enabled == false` forces exact zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub variance: f64,
    pub enabled: bool,
}

impl NoiseConfig {
    pub fn off() -> Self {
        NoiseConfig {
            variance: 0.0,
            enabled: false,
        }
    }

    /// Unit-variance noise; SNR is swept through the transmit power.
    pub fn unit() -> Self {
        NoiseConfig {
            variance: 1.0,
            enabled: true,
        }
    }

    /// Effective variance used in power budgets.
    pub fn power(&self) -> f64 {
        if self.enabled {
            self.variance
        } else {
            0.0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        if self.enabled {
            complex_normal(rng) * self.variance.sqrt()
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

/// Every noise injection of one block: `relay[i][t]` is `Z_{R_{i+1}}(t+1)`,
/// `dest[i][t]` is `Z_{D_{i+1}}(t+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSamples {
    pub relay: [[Complex64; SLOTS]; 2],
    pub dest: [[Complex64; SLOTS]; 2],
}

impl NoiseSamples {
    /// Number of scalar noise injections per block.
    pub const COUNT: usize = 4 * SLOTS;

    pub fn zero() -> Self {
        let z = [[Complex64::new(0.0, 0.0); SLOTS]; 2];
        NoiseSamples { relay: z, dest: z }
    }

    /// Draws relay samples (relay, slot) then destination samples (destination, slot).
    pub fn draw(config: &NoiseConfig, stream: RngStream) -> Self {
        let mut rng = stream.rng();
        let mut out = Self::zero();
        for row in out.relay.iter_mut().chain(out.dest.iter_mut()) {
            for z in row.iter_mut() {
                *z = config.sample(&mut rng);
            }
        }
        out
    }

    /// Flat view in the same order as [`draw`](Self::draw).
    pub fn to_vec(&self) -> Vec<Complex64> {
        self.relay
            .iter()
            .chain(self.dest.iter())
            .flat_map(|r| r.iter().copied())
            .collect()
    }

    /// The sample set with a single unit injection at flat index `k`.
    pub fn unit(k: usize) -> Self {
        assert!(k < Self::COUNT);
        let mut out = Self::zero();
        let one = Complex64::new(1.0, 0.0);
        let (group, rest) = (k / (2 * SLOTS), k % (2 * SLOTS));
        let (node, slot) = (rest / SLOTS, rest % SLOTS);
        if group == 0 {
            out.relay[node][slot] = one;
        } else {
            out.dest[node][slot] = one;
        }
        out
    }

    /// Relay noise pair at 1-based slot `t`.
    pub fn relay_pair(&self, t: usize) -> [Complex64; 2] {
        [self.relay[0][t - 1], self.relay[1][t - 1]]
    }

    pub fn dest_pair(&self, t: usize) -> [Complex64; 2] {
        [self.dest[0][t - 1], self.dest[1][t - 1]]
    }
}

/// One use of a hop: `out_i = sum_j channel[i][j] * inputs[j] + noise_i`.
pub fn hop_output(channel_t: &CMatrix, inputs: [Complex64; 2], noise: [Complex64; 2]) -> [Complex64; 2] {
    debug_assert!(channel_t.rows() == 2 && channel_t.cols() == 2);
    [0, 1].map(|i| channel_t[(i, 0)] * inputs[0] + channel_t[(i, 1)] * inputs[1] + noise[i])
}

/// Transmit sample of an idle terminal.
pub fn silent() -> Complex64 {
    Complex64::new(0.0, 0.0)
}
