// SPDX-License-Identifier: Apache-2.0

//! `cosim`: run co-simulation scenarios from TOML files.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use cosim_core::dut::catalogue;
use cosim_core::scenario::{run_scenario, RunOptions, ScenarioConfig, ScenarioError};
use cosim_core::Outcome;

const EXIT_CONFIG: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "cosim", version, about = "Cycle-accurate hardware/firmware co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        /// Scenario description (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the cycle limit.
        #[arg(long)]
        max_cycles: Option<u64>,
        /// Write a VCD waveform here.
        #[arg(long)]
        vcd: Option<PathBuf>,
        /// Write profiler reports into this directory.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// List the reference DUTs and their register maps.
    ListDuts {
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn list_duts(json: bool) -> anyhow::Result<()> {
    let duts = catalogue();
    let mut out = std::io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut out, &duts).context("encoding DUT list")?;
        writeln!(out)?;
        return Ok(());
    }
    for d in &duts {
        writeln!(out, "{}: {}", d.name, d.description)?;
        if !d.manager_ports.is_empty() {
            writeln!(out, "  manager ports: {}", d.manager_ports.join(", "))?;
        }
        for w in &d.registers {
            writeln!(
                out,
                "  {:<12} base 0x{:04x}  window 0x{:x}  latency {}",
                w.name, w.base, w.len, w.latency
            )?;
            for f in &w.fields {
                writeln!(out, "    +0x{:02x} {}", f.offset, f.name)?;
            }
        }
    }
    Ok(())
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn config_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn run(
    config: PathBuf,
    seed: Option<u64>,
    max_cycles: Option<u64>,
    vcd: Option<PathBuf>,
    report_dir: Option<PathBuf>,
) -> ExitCode {
    let mut cfg = match ScenarioConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = max_cycles {
        cfg.max_cycles = m;
    }
    let opts = RunOptions { vcd, report_dir, ..Default::default() };
    let run = match run_scenario(&cfg, &opts) {
        Ok(r) => r,
        Err(e @ ScenarioError::Invalid(_)) => return config_error(e),
        Err(e) if e.is_config() => return config_error(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let code = run.exit_code();
    let res = &run.result;
    let outcome = match res.outcome {
        Outcome::FirmwareDone { exit_code } => format!("firmware done (exit {exit_code})"),
        Outcome::MaxCyclesReached => "cycle limit reached".into(),
        Outcome::Hang => "hang".into(),
        Outcome::ProtocolViolation => "protocol violation".into(),
    };
    println!("outcome: {outcome}");
    println!("cycles: {}", res.final_cycle);
    for (port, n) in &run.report.stalls {
        println!("stalls {port}: {n}");
    }
    for f in &run.files {
        println!("wrote {}", f.display());
    }
    for d in &res.diagnostics {
        eprintln!("{d}");
    }
    for v in &run.violations {
        eprintln!("{v}");
    }
    if let Outcome::FirmwareDone { exit_code } = res.outcome {
        if exit_code != 0 {
            eprintln!("firmware reported failure: exit {exit_code}");
        }
    }
    println!("exit: {code}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    match cli.command {
        Command::Run { config, seed, max_cycles, vcd, report_dir } => run(config, seed, max_cycles, vcd, report_dir),
        Command::ListDuts { json } => match list_duts(json) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}
