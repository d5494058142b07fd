use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use scalarbound::commands::{apply_overrides, cmd_region, cmd_simulate, cmd_verify, Artifacts, Overrides, Suite};
use scalarbound::config::{validate_config, ConfigError, ValidatedConfig};
use scalarbound::scenarios::{list_scenarios, load_scenario};

/// Scalar comparison bounds for nonlinear time-varying delay systems.
#[derive(Parser, Debug)]
#[command(name = "scalarbound", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the system and its scalar bounds, check the bound chain.
    Simulate(RunArgs),
    /// Estimate stability or trapping radii and sweep the vector boundary.
    Region(RunArgs),
    /// Run one verification suite.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// comparison, monotonicity, robust or dominance
        #[arg(long)]
        suite: String,
    },
    /// Check a scenario and print it with defaults filled in.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// List the built-in scenarios.
    List,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario name
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Integration step override
    #[arg(long)]
    step: Option<f64>,
    /// Horizon override (simulation and classifier)
    #[arg(long)]
    horizon: Option<f64>,
    /// Seed override for the randomized suites
    #[arg(long)]
    seed: Option<u64>,
}

fn print_errors(errors: &[ConfigError]) {
    for e in errors {
        eprintln!("error: {e}");
    }
}

fn load(source: &Source) -> Result<ValidatedConfig> {
    let text = match (&source.config, &source.scenario) {
        (Some(path), _) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(name)) => load_scenario(name)?.text,
        (None, None) => bail!("one of --config or --scenario is required"),
    };
    validate_config(&text).map_err(|errs| {
        print_errors(&errs);
        anyhow::anyhow!("{} configuration error(s)", errs.len())
    })
}

fn prepare(run: &RunArgs) -> Result<ValidatedConfig> {
    let validated = load(&run.source)?;
    let overrides = Overrides {
        step: run.step,
        horizon: run.horizon,
        seed: run.seed,
    };
    let validated = if overrides.is_empty() {
        validated
    } else {
        apply_overrides(&validated.config, &overrides).map_err(|errs| {
            print_errors(&errs);
            anyhow::anyhow!("{} error(s) after applying overrides", errs.len())
        })?
    };
    for w in &validated.warnings {
        eprintln!("warning: {w}");
    }
    Ok(validated)
}

fn finish(art: Artifacts, run: &RunArgs) -> Result<ExitCode> {
    art.write_to(&run.out)
        .with_context(|| format!("writing artifacts to {}", run.out.display()))?;
    print!("{}", art.file("report.txt").unwrap_or_default());
    Ok(ExitCode::from(art.status.exit_code() as u8))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(run) => {
            let v = prepare(&run)?;
            finish(cmd_simulate(&v), &run)
        }
        Command::Region(run) => {
            let v = prepare(&run)?;
            finish(cmd_region(&v), &run)
        }
        Command::Verify { run, suite } => {
            let suite: Suite = suite.parse()?;
            let v = prepare(&run)?;
            finish(cmd_verify(&v, suite), &run)
        }
        Command::Validate { source } => {
            let v = load(&source)?;
            for w in &v.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", v.config.to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::List => {
            for name in list_scenarios() {
                let s = load_scenario(name)?;
                println!("{name}\t{}", s.summary);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
