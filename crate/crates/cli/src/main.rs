#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::error::{CliError, Result};
use crate::output::{OutDir, Provenance};

/// Exact simulation of multipartite systems coupled by non-diagonal dephasing.
#[derive(Debug, Parser)]
#[command(name = "dephasing", version)]
struct Cli {
    /// JSON run configuration; for `fig1`-`fig3` a replacement preset file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for grid scans (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full density-matrix snapshots on the time grid.
    Evolve,
    /// Reduced system coherences and states.
    System,
    /// Frequency and rate of one reduced coherence.
    Rates,
    /// Conditional past-future correlation over the time grid.
    Cpf,
    /// Entanglement thresholds of the ring coupling family.
    EntangleScan,
    /// Rate curves and equal-time CPF of the bipartite qubit example.
    Fig1,
    /// Entanglement region of the ring family.
    Fig2,
    /// Coherence decay and equal-time CPF of the ring family.
    Fig3,
    /// Run the acceptance suite; fails with exit code 4 on any failure.
    Verify {
        /// Multiplier applied to every tolerance of the suite.
        #[arg(long, default_value_t = 1.0)]
        tolerance: f64,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.display().to_string(), source })
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Evolve => "evolve",
        Command::System => "system",
        Command::Rates => "rates",
        Command::Cpf => "cpf",
        Command::EntangleScan => "entangle-scan",
        Command::Fig1 => "fig1",
        Command::Fig2 => "fig2",
        Command::Fig3 => "fig3",
        Command::Verify { .. } => "verify",
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("--threads", e.to_string()))?;
    }
    let command = name(&cli.command);
    let preset = match cli.command {
        Command::Fig1 => Some(presets::FIG1),
        Command::Fig2 => Some(presets::FIG2),
        Command::Fig3 => Some(presets::FIG3),
        _ => None,
    };
    let text = match (&cli.config, preset) {
        (Some(path), _) => read(path)?,
        (None, Some(p)) => p.to_string(),
        (None, None) if matches!(cli.command, Command::Verify { .. }) => "{}".to_string(),
        (None, None) => return Err(CliError::config("--config", format!("`{command}` needs a configuration file"))),
    };
    let config = if preset.is_some() {
        config::RunConfig::default()
    } else {
        let source = cli.config.as_ref().map_or("config".into(), |p| p.display().to_string());
        config::parse(&text, &source)?
    };
    let mut ctx = Context { config, prov: Provenance::new(command, &text), out: OutDir::new(&cli.out)? };
    match cli.command {
        Command::Evolve => commands::evolve_cmd(&mut ctx),
        Command::System => commands::system_cmd(&mut ctx),
        Command::Rates => commands::rates_cmd(&mut ctx),
        Command::Cpf => commands::cpf_cmd(&mut ctx),
        Command::EntangleScan => commands::entangle_scan_cmd(&mut ctx),
        Command::Fig1 => commands::fig1_cmd(&mut ctx, &text),
        Command::Fig2 => commands::fig2_cmd(&mut ctx, &text),
        Command::Fig3 => commands::fig3_cmd(&mut ctx, &text),
        Command::Verify { tolerance } => commands::verify_cmd(&mut ctx, tolerance),
    }?;
    for path in &ctx.out.written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
