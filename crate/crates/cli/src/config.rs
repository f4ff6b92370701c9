use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use twohop_ia::experiment::{SweepConfig, VerifyConfig, DEFAULT_TOLERANCE};
use twohop_ia::linalg::DEFAULT_COND_THRESHOLD;
use twohop_ia::lsf::PrecoderSet;
use twohop_ia::SchemeId;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Verify,
    Rate,
    Slope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    On,
    Off,
}

/// Flags shared by every mode. Anything left unset falls back to the config
/// file, then to the built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Scheme to run; repeat for several (dcsis, lsf, tdma)
    #[arg(long = "scheme", value_name = "ID")]
    pub schemes: Vec<SchemeId>,
    /// Transmit power in dB; repeat for a sweep
    #[arg(long = "pdb", value_name = "DB", allow_negative_numbers = true)]
    pub p_db: Vec<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Master seed of every random stream
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative recovery tolerance for verify
    #[arg(long = "tol")]
    pub tolerance: Option<f64>,
    /// Condition number above which a block counts as an outage
    #[arg(long)]
    pub cond_threshold: Option<f64>,
    /// Output file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub noise: Option<Noise>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Fixed precoder pair of the limited-feedback scheme (integer, unit_circle)
    #[arg(long)]
    pub precoders: Option<PrecoderSet>,
    /// TOML file with any of the settings above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Settings file; keys mirror the long flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<Mode>,
    #[serde(default)]
    pub scheme: Vec<SchemeId>,
    #[serde(default)]
    pub pdb: Vec<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub cond_threshold: Option<f64>,
    pub out: Option<PathBuf>,
    pub noise: Option<Noise>,
    pub jobs: Option<usize>,
    pub precoders: Option<PrecoderSet>,
    pub csv: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}

/// Flags merged over the file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub schemes: Vec<SchemeId>,
    pub p_db: Vec<f64>,
    pub trials: Option<u64>,
    pub seed: u64,
    pub tolerance: f64,
    pub cond_threshold: f64,
    pub out: Option<PathBuf>,
    pub noise: Option<Noise>,
    pub jobs: usize,
    pub precoders: PrecoderSet,
}

pub const DEFAULT_SEED: u64 = 42;

impl Settings {
    pub fn merge(flags: Flags, file: &FileConfig) -> Self {
        let jobs = flags
            .jobs
            .or(file.jobs)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Settings {
            schemes: if flags.schemes.is_empty() { file.scheme.clone() } else { flags.schemes },
            p_db: if flags.p_db.is_empty() { file.pdb.clone() } else { flags.p_db },
            trials: flags.trials.or(file.trials),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            tolerance: flags.tolerance.or(file.tol).unwrap_or(DEFAULT_TOLERANCE),
            cond_threshold: flags.cond_threshold.or(file.cond_threshold).unwrap_or(DEFAULT_COND_THRESHOLD),
            out: flags.out.or_else(|| file.out.clone()),
            noise: flags.noise.or(file.noise),
            jobs: jobs.max(1),
            precoders: flags.precoders.or(file.precoders).unwrap_or_default(),
        }
    }

    fn schemes_or_all(&self) -> Vec<SchemeId> {
        if self.schemes.is_empty() {
            SchemeId::ALL.to_vec()
        } else {
            self.schemes.clone()
        }
    }

    pub fn verify_configs(&self) -> Result<Vec<VerifyConfig>, Failure> {
        if self.noise == Some(Noise::On) {
            return Err(Failure::Usage("verify runs noiseless blocks; drop --noise on".into()));
        }
        if self.p_db.len() > 1 {
            return Err(Failure::Usage("verify takes at most one --pdb".into()));
        }
        self.schemes_or_all()
            .into_iter()
            .map(|scheme| {
                let mut c = VerifyConfig::new(scheme, self.trials.unwrap_or(10_000), self.seed);
                c.tolerance = self.tolerance;
                c.cond_threshold = self.cond_threshold;
                c.precoders = self.precoders;
                if let Some(&p) = self.p_db.first() {
                    c.p_db = p;
                }
                c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
                Ok(c)
            })
            .collect()
    }

    pub fn sweep_config(&self, for_slope: bool) -> Result<SweepConfig, Failure> {
        if self.noise == Some(Noise::Off) {
            return Err(Failure::Usage("rates are measured with unit noise; drop --noise off".into()));
        }
        let mut c = SweepConfig::new(self.schemes_or_all(), self.p_db.clone(), self.trials.unwrap_or(2000), self.seed);
        c.cond_threshold = self.cond_threshold;
        c.precoders = self.precoders;
        c.validate(for_slope).map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(c)
    }
}
