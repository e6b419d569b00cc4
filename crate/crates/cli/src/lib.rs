//! Scenario-driven front end: loads a scenario, applies flag overrides and
//! dispatches to the subcommands.

pub mod args;
pub mod commands;
pub mod output;
pub mod schema;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cycling_core::scenario::{Scenario, REFERENCE};

use args::{Cli, Command};
use output::{Sink, Stamp};

/// A loaded scenario with the text it came from.
pub struct Loaded {
    pub scenario: Scenario,
    pub text: String,
}

pub fn load(config: Option<&PathBuf>) -> Result<Loaded> {
    let text = match config {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("cannot read scenario {}", path.display()))?,
        None => REFERENCE.to_string(),
    };
    let scenario = Scenario::parse(&text).with_context(|| match config {
        Some(path) => format!("in scenario {}", path.display()),
        None => "in the built-in scenario".to_string(),
    })?;
    Ok(Loaded { scenario, text })
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    anyhow::ensure!(n > 0, "--threads must be positive");
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot configure the thread pool")?;
    Ok(())
}

/// Runs one invocation; `Ok` carries the process exit code.
pub fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads(cli.threads)?;
    let Loaded { mut scenario, text } = load(cli.config.as_ref())?;
    if let Some(seed) = cli.seed {
        scenario.sim.seed = seed;
    }
    let dir = cli.out.clone().unwrap_or_else(|| scenario.output_dir.clone());
    let mut sink = Sink::new(&dir, Stamp::new(&text, scenario.sim.seed))?;
    let code = match &cli.command {
        Command::Analyze(a) => commands::analyze(&scenario, a, &mut sink).context("analyze")?,
        Command::Profile(a) => commands::profile(&scenario, a, &mut sink).context("profile")?,
        Command::Theory(a) => commands::theory(&scenario, a, &mut sink).context("theory")?,
        Command::Volterra(a) => commands::volterra(&scenario, a, &mut sink).context("volterra")?,
        Command::Simulate(a) => commands::simulate(&scenario, a, &mut sink).context("simulate")?,
        Command::Validate(a) => commands::validate(&scenario, a, &mut sink).context("validate")?,
    };
    for path in &sink.written {
        eprintln!("wrote {}", path.display());
    }
    Ok(code)
}
