//! `lillab`: runs one verification experiment from a JSON configuration.
//!
//! Exit codes: 0 pass, 2 certified failure (including a degenerate
//! variance), 1 usage or validation error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lillab_core::config::ExperimentConfig;
use lillab_core::report::{unix_now, write_artifacts};
use lillab_core::runner::{run, with_threads, Command};
use lillab_core::LabError;

const SEED_ENV: &str = "LILLAB_SEED";

#[derive(Parser, Debug)]
#[command(name = "lillab", version, about = "Mixing certificates, correctors and LIL diagnostics for Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed; takes precedence over LILLAB_SEED and the config file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Directory for `<command>.json` (and `<command>.csv`); stdout when omitted.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Dirac-to-Dirac Wasserstein contraction on a grid.
    CertifyMixing,
    /// Boundedness of the moments of the Lyapunov function.
    CertifyMoments,
    /// Exponential decay of d_W(νP_t, μ*).
    Ergodicity,
    /// Corrector of the observable and its accuracy.
    Corrector,
    /// Three representations of the asymptotic variance.
    Sigma,
    /// Martingale property of the increments, with a corrupted-corrector control.
    MartingaleCheck,
    /// Heyde–Scott conditions on the martingale increments.
    HeydeScott,
    /// LIL envelope statistics.
    Lil,
    /// Kolmogorov–Smirnov test of the normalized functional.
    CltProxy,
    /// Gap between the functional and its integer skeleton.
    Discretization,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::CertifyMixing => Command::CertifyMixing,
            Cmd::CertifyMoments => Command::CertifyMoments,
            Cmd::Ergodicity => Command::Ergodicity,
            Cmd::Corrector => Command::Corrector,
            Cmd::Sigma => Command::Sigma,
            Cmd::MartingaleCheck => Command::MartingaleCheck,
            Cmd::HeydeScott => Command::HeydeScott,
            Cmd::Lil => Command::Lil,
            Cmd::CltProxy => Command::CltProxy,
            Cmd::Discretization => Command::Discretization,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn report_error(e: &LabError) -> ExitCode {
    match e {
        LabError::Config(items) => {
            eprintln!("error: invalid configuration");
            for line in items.lines() {
                eprintln!("  - {line}");
            }
        }
        other => eprintln!("error: {other}"),
    }
    ExitCode::from(1)
}

fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let seed = match env_seed() {
        Ok(s) => cli.seed.or(s),
        Err(msg) => return usage_error(&msg),
    };
    let cfg = match &cli.config {
        None => ExperimentConfig::default(),
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match ExperimentConfig::from_json(&text) {
                Ok(c) => c,
                Err(e) => return report_error(&e),
            },
            Err(e) => return usage_error(&format!("cannot read {}: {e}", path.display())),
        },
    };
    let resolved = match cfg.resolve(seed) {
        Ok(r) => r,
        Err(e) => return report_error(&e),
    };
    let command = Command::from(cli.command);
    let outcome = match with_threads(cli.threads, || run(command, &resolved)) {
        Ok(Ok(o)) => o,
        Ok(Err(e)) | Err(e) => return report_error(&e),
    };
    let json = match outcome.to_json(&resolved, Some(unix_now())) {
        Ok(j) => j,
        Err(e) => return report_error(&e),
    };
    let csv = match cli.format {
        Format::Json => None,
        Format::Csv => match outcome.series.to_csv() {
            Ok(c) => Some(c),
            Err(e) => return report_error(&e),
        },
    };
    match &cli.out {
        Some(dir) => match write_artifacts(dir, command.name(), &json, csv.as_deref()) {
            Ok(paths) => {
                for p in paths {
                    eprintln!("wrote {}", p.display());
                }
            }
            Err(e) => return report_error(&e),
        },
        None => print!("{}", csv.as_deref().unwrap_or(&json)),
    }
    eprintln!("{}: {}", command.name(), outcome.status);
    ExitCode::from(outcome.exit_code() as u8)
}
