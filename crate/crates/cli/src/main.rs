//! Command-line experiment runner: ground states, excitation spectra, ΔN scans,
//! bound-state studies and Bethe reference tables.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure (including
//! unconverged ground states and partial scans, whose output is still written).

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<cmps::Error> for CliError {
    fn from(e: cmps::Error) -> Self {
        match e {
            cmps::Error::InvalidParameter(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "cmps", version, about = "Continuous matrix product state experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize a ground state; writes the state and its observables as JSON.
    GroundState,
    /// Excitation spectra over a momentum grid, one CSV per sector; LL topological runs add
    /// Type I/II composites against the Bethe solution, pairing runs the two-kink cloud.
    Spectrum,
    /// ΔN of the hole state at p = 0 for each γ in --gammas.
    DeltaN,
    /// Lowest trivial levels at p = 0 against twice the kink minimum, per bond dimension.
    BoundState,
    /// Bethe-ansatz ground state and excitation branches of the Lieb-Liniger model.
    Bethe,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    if let Some(n) = cfg.threads {
        // fails only when a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
    match cli.command {
        Command::GroundState => commands::ground_state(&cfg, &out),
        Command::Spectrum => commands::spectrum(&cfg, &out),
        Command::DeltaN => commands::delta_n(&cfg, &out),
        Command::BoundState => commands::bound_state(&cfg, &out),
        Command::Bethe => commands::bethe(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
