//! `kbstab`: batch certification of Kalman-Bucy stability bounds from a scenario file.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::Command;
use scenario::SchemaErrors;

const DEFAULT_OUT: &str = "kbstab-out";

#[derive(Debug, Parser)]
#[command(
    name = "kbstab",
    version,
    about = "Certify Kalman-Bucy filter stability bounds for a scenario"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (TOML, or JSON with a `.json` extension).
    #[arg(long, short = 's')]
    scenario: PathBuf,
    /// Output directory; overrides `output.dir` and `KBSTAB_OUT`.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    /// Monte Carlo seed; overrides `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long, short = 'q')]
    quiet: bool,
}

/// Exit status for a failed run: 1 for a model that cannot be certified, 2 for bad input,
/// 3 for numerical or I/O failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<SchemaErrors>().is_some() {
        return 2;
    }
    if let Some(e) = err.chain().find_map(|c| c.downcast_ref::<kbstab::Error>()) {
        return match e {
            kbstab::Error::NotCertifiable(_) => 1,
            kbstab::Error::InvalidArgument(_)
            | kbstab::Error::Dimension(_)
            | kbstab::Error::NotSquare { .. } => 2,
            _ => 3,
        };
    }
    3
}

fn out_dir(cli: &Cli, sc: &scenario::Scenario) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| sc.output.dir.clone())
        .or_else(|| std::env::var_os("KBSTAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = scenario::parse_scenario(&cli.scenario)
        .map_err(anyhow::Error::new)
        .and_then(|sc| {
            let outcome = commands::run(&sc, cli.command, cli.seed)?;
            let path = output::write_all(
                &out_dir(&cli, &sc),
                cli.command,
                &sc.source,
                &outcome,
                sc.output.csv,
            )?;
            Ok((outcome, path))
        });
    match result {
        Ok((outcome, path)) => {
            let passed = outcome.passed();
            if !cli.quiet || !passed {
                for c in &outcome.checks {
                    let status = match (c.passed(), c.asserted) {
                        (true, _) => "PASS",
                        (false, true) => "FAIL",
                        (false, false) => "note",
                    };
                    println!(
                        "{status} {} ({} samples, worst ratio {:.4e})",
                        c.name, c.samples, c.worst_ratio
                    );
                }
                println!("report: {}", path.display());
            }
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("kbstab {}: {e:#}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
