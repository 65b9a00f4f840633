use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use tsv_lab::{run, Format, LabError, Overrides, Scenario};

#[derive(Parser)]
#[command(name = "tsv-lab", version, about = "Run protective-measurement scenarios")]
struct Cli {
    /// Scenario to run.
    #[arg(value_enum)]
    scenario: Scenario,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON config file; defaults are used when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write results here instead of standard output.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Seed for scenarios with random sweeps (default 42).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Time steps for scenarios that integrate in time.
    #[arg(long, value_name = "N")]
    steps: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let prefix = match (&e, &cli.common.config) {
                (LabError::Config { .. }, Some(path)) => format!("{}: ", path.display()),
                _ => String::new(),
            };
            eprintln!("error: {prefix}{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), LabError> {
    let text = cli.common.config.as_ref().map(std::fs::read_to_string).transpose()?;
    let overrides = Overrides {
        output: cli.common.output.clone(),
        format: cli.common.format,
        seed: cli.common.seed,
        steps: cli.common.steps,
    };
    let out = run(cli.scenario, text.as_deref(), &overrides)?;
    match &out.path {
        Some(path) => std::fs::write(path, &out.text)?,
        None => std::io::stdout().write_all(out.text.as_bytes())?,
    }
    Ok(())
}
