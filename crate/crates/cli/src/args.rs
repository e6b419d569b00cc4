//! Command-line interface definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cycling", version, about = "Noise-induced passage through an unstable periodic orbit")]
pub struct Cli {
    /// Scenario file (TOML). The built-in reference scenario is used when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the scenario's.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Simulation seed, overriding the scenario's.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for the parallel loops.
    #[arg(long, global = true, value_name = "N", env = "CYCLING_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hypothesis report, rate constants and periodic curves.
    Analyze(AnalyzeArgs),
    /// The cycling profile in both representations.
    Profile(ProfileArgs),
    /// Theoretical first-passage density curves.
    Theory(TheoryArgs),
    /// Level-crossing Volterra solve.
    Volterra(VolterraArgs),
    /// Monte Carlo histogram of the first passage through +1.
    Simulate(SimulateArgs),
    /// Run the acceptance criteria.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Number of periods covered by the curves.
    #[arg(long, default_value_t = 2)]
    pub periods: usize,
    #[arg(long, default_value_t = 256)]
    pub points_per_period: usize,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// λT of the profile; defaults to the scenario's.
    #[arg(long)]
    pub lambda_t: Option<f64>,
    /// Points per unit of x on [0, 3).
    #[arg(long, default_value_t = 512)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long)]
    pub points_per_period: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// |log σ| range START:STEP:STOP; writes one curve per σ and a combined cycling table.
    #[arg(long, value_name = "START:STEP:STOP", value_parser = parse_range)]
    pub sigma_sweep: Option<Range>,
    /// Times at which the cycling table samples the prefactor (comma separated).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub fixed_t: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Problem {
    ModelPsiMinus,
    ModelPsiUp,
    ModelPsiDown,
    ConstantBoundary,
    Custom,
}

#[derive(Debug, Args)]
pub struct VolterraArgs {
    /// Problem to solve; defaults to the scenario's model leg.
    #[arg(long, value_enum)]
    pub problem: Option<Problem>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Start time of a model leg.
    #[arg(long)]
    pub start: Option<f64>,
    /// Boundary height of the constant-boundary problem.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub picard_iters: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub bins_per_period: usize,
    /// Endpoint-only detection of +1.
    #[arg(long)]
    pub no_bridge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Skip {
    Mc,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Skip the Monte Carlo criteria (5, 7, 8).
    #[arg(long, value_enum)]
    pub skip: Option<Skip>,
    /// Replace the tolerance of a criterion, e.g. 1=1e-12.
    #[arg(long, value_name = "ID=VAL", value_parser = parse_tolerance)]
    pub tolerance: Vec<(u8, f64)>,
    #[arg(long)]
    pub mc_paths: Option<usize>,
    #[arg(long)]
    pub ks_paths: Option<usize>,
}

/// An inclusive arithmetic range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub start: f64,
    pub step: f64,
    pub stop: f64,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

pub fn parse_range(s: &str) -> Result<Range, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected START:STEP:STOP, got {s:?}"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    let r = Range { start: num(a)?, step: num(b)?, stop: num(c)? };
    if !(r.start > 0.0 && r.step > 0.0 && r.stop >= r.start) || !r.stop.is_finite() {
        return Err(format!("need 0 < START <= STOP and STEP > 0, got {s:?}"));
    }
    Ok(r)
}

pub fn parse_tolerance(s: &str) -> Result<(u8, f64), String> {
    let (id, val) = s.split_once('=').ok_or_else(|| format!("expected ID=VAL, got {s:?}"))?;
    let id: u8 = id.trim().parse().map_err(|e| format!("criterion id {id:?}: {e}"))?;
    if !(1..=9).contains(&id) {
        return Err(format!("criterion id must be 1..9, got {id}"));
    }
    let val: f64 = val.trim().parse().map_err(|e| format!("tolerance {val:?}: {e}"))?;
    Ok((id, val))
}
