use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("harmonic index must be positive")]
    ZeroHarmonic,
    #[error("coefficients a and g must share the period ({a} vs {g})")]
    PeriodMismatch { a: f64, g: f64 },
    #[error("switching levels must satisfy 0 < delta1 < delta2 < 1, got delta1={delta1}, delta2={delta2}")]
    BadLevels { delta1: f64, delta2: f64 },
    #[error("noise intensity must be positive, got {0}")]
    BadSigma(f64),
    #[error("{name} is not positive: minimum {min} at t={t}")]
    NotPositive { name: &'static str, min: f64, t: f64 },
    #[error("Lyapunov exponent must be positive, got {0}")]
    NonPositiveLyapunov(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("rate function is degenerate: {0}")]
    Degenerate(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("t={t} lies in the transient regime (alpha(t)={alpha} < 2|log sigma|={threshold}); use the transient bound")]
    Transient { t: f64, alpha: f64, threshold: f64 },
    #[error("t={t} is beyond the metastable validity window (alpha(t)={alpha} > {limit})")]
    BeyondMetastable { t: f64, alpha: f64, limit: f64 },
    #[error("Laplace sum needs n >= 4 and n*lambda*T >= 2|log sigma| (n={n}, n*lambda*T={n_lambda_t}, 2|log sigma|={threshold})")]
    LaplacePrecondition { n: i64, n_lambda_t: f64, threshold: f64 },
    #[error("noise intensity sigma={0} must lie in (0, 1) for |log sigma| scaling")]
    SigmaOutOfRange(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolterraError {
    #[error("invalid level-crossing problem: {0}")]
    Invalid(String),
    #[error("grid too coarse: halving check changed the solution by {change:.3e} (tolerance {tol:.1e})")]
    GridTooCoarse { change: f64, tol: f64 },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Model(#[from] ModelError),
}
