//! `twohop-ia`: noiseless verification, rate sweeps and slope reports.
//!
//! Exit status: 0 pass, 1 acceptance failure, 2 usage or configuration
//! error, 3 I/O error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twohop_ia::experiment::{parse_csv, run_sweep, run_verify, write_csv, SlopeSummary, VerifyReport};

use config::{FileConfig, Flags, Mode, Settings};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
}

#[derive(Parser)]
#[command(name = "twohop-ia", version, about = "Two-hop interference network simulator")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    /// Mode when no subcommand is given
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[command(flatten)]
    flags: Flags,
    /// Rate table to fit instead of running a sweep (slope mode)
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Noiseless recovery, full-rank and information-flow checks
    Verify(Flags),
    /// Mean sum rate per scheme and power, as CSV
    Rate(Flags),
    /// Fitted rate slope per scheme, as JSON
    Slope {
        #[command(flatten)]
        flags: Flags,
        /// Rate table to fit instead of running a sweep
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("I/O error: {m}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let (mode, flags, csv) = match cli.command {
        Some(Command::Verify(f)) => (Some(Mode::Verify), f, None),
        Some(Command::Rate(f)) => (Some(Mode::Rate), f, None),
        Some(Command::Slope { flags, csv }) => (Some(Mode::Slope), flags, csv),
        None => (cli.mode, cli.flags, cli.csv),
    };
    let file = match &flags.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mode = mode
        .or(file.mode)
        .ok_or_else(|| Failure::Usage("no mode given; use a subcommand or --mode".into()))?;
    let csv = csv.or_else(|| file.csv.clone());
    let settings = Settings::merge(flags, &file);
    match mode {
        Mode::Verify => verify(&settings),
        Mode::Rate => rate(&settings),
        Mode::Slope => slope(&settings, csv.as_deref()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn verify(s: &Settings) -> Result<bool, Failure> {
    let configs = s.verify_configs()?;
    let mut reports: Vec<VerifyReport> = Vec::with_capacity(configs.len());
    for c in &configs {
        let r = run_verify(c, s.jobs).map_err(|e| Failure::Usage(e.to_string()))?;
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        eprintln!(
            "verify {}: {} max_rel_err={:.3e} outage={:.4}{}",
            c.scheme,
            if r.pass { "PASS" } else { "FAIL" },
            r.max_recovery_error,
            r.outage_fraction,
            if failed.is_empty() { String::new() } else { format!(" failed={}", failed.join(",")) }
        );
        reports.push(r);
    }
    let text = match reports.as_slice() {
        [one] => one.to_json(),
        many => serde_json::to_string_pretty(many).expect("reports serialize") + "\n",
    };
    emit(s.out.as_deref(), &text)?;
    Ok(reports.iter().all(|r| r.pass))
}

fn rate(s: &Settings) -> Result<bool, Failure> {
    let config = s.sweep_config(false)?;
    let sweep = run_sweep(&config, s.jobs).map_err(|e| Failure::Usage(e.to_string()))?;
    emit(s.out.as_deref(), &write_csv(&sweep.meta, &sweep.curves))?;
    Ok(true)
}

fn slope(s: &Settings, csv: Option<&Path>) -> Result<bool, Failure> {
    let (meta, curves) = match csv {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            parse_csv(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => {
            let sweep = run_sweep(&s.sweep_config(true)?, s.jobs).map_err(|e| Failure::Usage(e.to_string()))?;
            (sweep.meta, sweep.curves)
        }
    };
    let summary = SlopeSummary::new(&meta, &curves).map_err(|e| Failure::Usage(e.to_string()))?;
    for c in &summary.schemes {
        eprintln!(
            "slope {}: {:.4} window [{}, {}] {}",
            c.scheme,
            c.slope,
            c.window[0],
            c.window[1],
            if c.in_window { "PASS" } else { "FAIL" }
        );
    }
    emit(s.out.as_deref(), &summary.to_json())?;
    Ok(summary.all_in_window())
}
