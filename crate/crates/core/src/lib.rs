//! Two-level piecewise-linear model of noise-induced passage through an
//! unstable periodic orbit: periodic variances, the cycling profile,
//! closed-form first-passage densities, a Gaussian level-crossing Volterra
//! solver, and a Monte Carlo simulator of the switching process.

pub mod coefficients;
pub mod density;
pub mod error;
pub mod exec;
pub mod gamma;
pub mod montecarlo;
pub mod numerics;
pub mod profile;
pub mod scenario;
pub mod theory;
pub mod validation;
pub mod variances;
pub mod volterra;

pub use coefficients::{HypothesisReport, ModelSpec, PeriodicFunction};
pub use error::{ModelError, RateError, RegimeError, ScenarioError, VolterraError};
pub use exec::Mode;
pub use variances::RateReport;
