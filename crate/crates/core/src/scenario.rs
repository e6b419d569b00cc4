//! TOML scenario files driving every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::{ModelSpec, PeriodicFunction};
use crate::error::ScenarioError;
use crate::montecarlo::SimConfig;
use crate::theory::DEFAULT_BETA;
use crate::volterra::ModelLeg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "T")]
    pub period: f64,
    pub a: SeriesSection,
    pub g: SeriesSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsSection {
    pub delta1: f64,
    pub delta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryOptions {
    /// Length of the theory curve in periods.
    pub periods: usize,
    pub points_per_period: usize,
    pub beta: f64,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        Self { periods: 12, points_per_period: 64, beta: DEFAULT_BETA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolterraOptions {
    pub leg: ModelLeg,
    pub start: f64,
    pub t_max: f64,
    pub steps: usize,
    /// Boundary height of the constant-boundary problem (v(t) = t).
    pub level: f64,
    /// Polynomial coefficients of v and d for the custom problem, in
    /// increasing degree.
    pub custom_v: Vec<f64>,
    pub custom_d: Vec<f64>,
}

impl Default for VolterraOptions {
    fn default() -> Self {
        Self { leg: ModelLeg::Minus, start: 0.0, t_max: 8.0, steps: 2000, level: 1.0, custom_v: Vec::new(), custom_d: Vec::new() }
    }
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelSection,
    pub levels: LevelsSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub theory: TheoryOptions,
    #[serde(default)]
    pub volterra: VolterraOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ModelSpec,
    pub sim: SimConfig,
    pub output_dir: PathBuf,
    pub theory: TheoryOptions,
    pub volterra: VolterraOptions,
}

impl Scenario {
    pub fn from_file_data(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let t = file.model.period;
        let a = PeriodicFunction::from_arrays(t, file.model.a.mean, &file.model.a.cos, &file.model.a.sin)?;
        let g = PeriodicFunction::from_arrays(t, file.model.g.mean, &file.model.g.cos, &file.model.g.sin)?;
        let spec = ModelSpec::new(a, g, file.levels.delta1, file.levels.delta2, file.noise.sigma)?;
        Ok(Self { spec, sim: file.sim, output_dir: file.output.dir, theory: file.theory, volterra: file.volterra })
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Self::from_file_data(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Period T = 1, a ≡ 1, g = 1.8(1 + 0.2cos 2πt), δ₁ = 0.5, δ₂ = 0.75, σ = 0.35.
    pub fn reference() -> Self {
        Self::parse(REFERENCE).expect("built-in scenario is valid")
    }
}

pub const REFERENCE: &str = r#"[model]
T = 1.0

[model.a]
mean = 1.0

[model.g]
mean = 1.8
cos = [0.36]

[levels]
delta1 = 0.5
delta2 = 0.75

[noise]
sigma = 0.35

[sim]
substeps_per_period = 64
n_paths = 100000
t_max_periods = 40
seed = 20260101
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parses() {
        let s = Scenario::reference();
        assert_eq!(s.spec.period(), 1.0);
        assert_eq!(s.spec.g.eval(0.0), 1.8 + 0.36);
        assert_eq!(s.sim.substeps_per_period, 64);
        assert!(s.sim.bridge_correction);
        assert_eq!(s.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn missing_key_is_named() {
        let text = REFERENCE.replace("delta1 = 0.5\n", "");
        let err = Scenario::parse(&text).unwrap_err().to_string();
        assert!(err.contains("delta1"), "{err}");
    }

    #[test]
    fn invalid_levels_rejected() {
        let text = REFERENCE.replace("delta2 = 0.75", "delta2 = 0.25");
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Model(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = REFERENCE.replace("[noise]\n", "[noise]\nmu = 1\n");
        let err = Scenario::parse(&text).unwrap_err().to_string();
        assert!(err.contains("mu"), "{err}");
    }
}
