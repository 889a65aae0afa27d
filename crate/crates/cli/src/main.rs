use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ijtag_health::sim::{run_file, RunOptions};
use ijtag_health::trace::{emit_trace, TraceFormat};
use ijtag_health::{parse_network, print_network};

#[derive(Parser)]
#[command(name = "ijtag-sim", version, about = "IJTAG health-monitoring network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and emit its trace.
    Run {
        scenario: PathBuf,
        /// Trace format: text, vcd or json.
        #[arg(long, default_value = "text", value_parser = parse_format)]
        trace: TraceFormat,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario horizon (last simulated cycle).
        #[arg(long)]
        horizon: Option<u64>,
        /// Seed for generated IMU samples.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate a scenario and exit nonzero if any expectation fails.
    Check {
        scenario: PathBuf,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a network file and print its canonical form.
    Parse { network: PathBuf },
}

fn parse_format(s: &str) -> Result<TraceFormat, String> {
    s.parse()
}

fn main() -> ExitCode {
    match try_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { scenario, trace, out, horizon, seed } => {
            let report = run_file(&scenario, &RunOptions { horizon, seed })?;
            let text = emit_trace(&report, trace);
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { scenario, horizon, seed } => {
            let report = run_file(&scenario, &RunOptions { horizon, seed })?;
            for v in &report.verdicts {
                println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.expectation, v.detail);
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Parse { network } => {
            let text = fs::read_to_string(&network).with_context(|| format!("reading {}", network.display()))?;
            match parse_network(&text) {
                Ok(desc) => {
                    print!("{}", print_network(&desc));
                    Ok(ExitCode::SUCCESS)
                }
                Err(errors) => {
                    for e in errors {
                        eprintln!("{}:{e}", network.display());
                    }
                    Ok(ExitCode::FAILURE)
                }
            }
        }
    }
}
