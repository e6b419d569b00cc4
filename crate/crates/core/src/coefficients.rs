//! Periodic coefficients a(t), g(t), the model scenario, and the hypothesis
//! checker.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::numerics::{golden_section, second_derivative, PeriodicSamples};
use crate::variances;

/// Grid density used for positivity and extremum scans.
pub const SCAN_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub k: u32,
    pub cos: f64,
    pub sin: f64,
}

/// A finite trigonometric series `mean + Σ c_k cos(2πkt/T) + s_k sin(2πkt/T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicFunction {
    period: f64,
    mean: f64,
    harmonics: Vec<Harmonic>,
}

impl PeriodicFunction {
    pub fn new(period: f64, mean: f64, harmonics: Vec<Harmonic>) -> Result<Self, ModelError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(ModelError::BadPeriod(period));
        }
        if harmonics.iter().any(|h| h.k == 0) {
            return Err(ModelError::ZeroHarmonic);
        }
        Ok(Self { period, mean, harmonics })
    }

    pub fn constant(period: f64, value: f64) -> Result<Self, ModelError> {
        Self::new(period, value, Vec::new())
    }

    /// Builds from parallel arrays; entry `i` is harmonic `k = i + 1`.
    /// The shorter array is padded with zeros.
    pub fn from_arrays(period: f64, mean: f64, cos: &[f64], sin: &[f64]) -> Result<Self, ModelError> {
        let n = cos.len().max(sin.len());
        let harmonics = (0..n)
            .map(|i| Harmonic {
                k: i as u32 + 1,
                cos: cos.get(i).copied().unwrap_or(0.0),
                sin: sin.get(i).copied().unwrap_or(0.0),
            })
            .filter(|h| h.cos != 0.0 || h.sin != 0.0)
            .collect();
        Self::new(period, mean, harmonics)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    fn omega(&self, k: u32) -> f64 {
        TAU * k as f64 / self.period
    }

    pub fn eval(&self, t: f64) -> f64 {
        let r = t.rem_euclid(self.period);
        self.harmonics.iter().fold(self.mean, |acc, h| {
            let (s, c) = (self.omega(h.k) * r).sin_cos();
            acc + h.cos * c + h.sin * s
        })
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let r = t.rem_euclid(self.period);
        self.harmonics.iter().fold(0.0, |acc, h| {
            let w = self.omega(h.k);
            let (s, c) = (w * r).sin_cos();
            acc + w * (h.sin * c - h.cos * s)
        })
    }

    /// ∫₀ᵗ f(s) ds. The periodic part is evaluated on `t mod T`, so that
    /// `integral(t + T) = integral(t) + mean·T` up to rounding.
    pub fn integral(&self, t: f64) -> f64 {
        let cycles = (t / self.period).floor();
        let r = t - cycles * self.period;
        let periodic = self.harmonics.iter().fold(0.0, |acc, h| {
            let w = self.omega(h.k);
            let (s, c) = (w * r).sin_cos();
            acc + (h.cos * s + h.sin * (1.0 - c)) / w
        });
        self.mean * t + periodic
    }

    pub fn samples(&self, n: usize) -> PeriodicSamples {
        PeriodicSamples::new(|t| self.eval(t), self.period, n)
    }

    /// Grid minimum `(t, value)` over one period.
    pub fn grid_min(&self) -> (f64, f64) {
        let s = self.samples(SCAN_POINTS);
        let i = s.argmin();
        (s.time(i), s.values[i])
    }
}

/// Full scenario of the two-level model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub a: PeriodicFunction,
    pub g: PeriodicFunction,
    pub delta1: f64,
    pub delta2: f64,
    pub sigma: f64,
}

impl ModelSpec {
    pub fn new(a: PeriodicFunction, g: PeriodicFunction, delta1: f64, delta2: f64, sigma: f64) -> Result<Self, ModelError> {
        if (a.period - g.period).abs() > 1e-12 * a.period {
            return Err(ModelError::PeriodMismatch { a: a.period, g: g.period });
        }
        if !(0.0 < delta1 && delta1 < delta2 && delta2 < 1.0) {
            return Err(ModelError::BadLevels { delta1, delta2 });
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ModelError::BadSigma(sigma));
        }
        for (name, f) in [("a(t)", &a), ("g(t)", &g)] {
            let (t, min) = f.grid_min();
            if min <= 0.0 {
                return Err(ModelError::NotPositive { name, min, t });
            }
        }
        if a.mean() <= 0.0 {
            return Err(ModelError::NonPositiveLyapunov(a.mean()));
        }
        Ok(Self { a, g, delta1, delta2, sigma })
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self, ModelError> {
        Self::new(self.a.clone(), self.g.clone(), self.delta1, self.delta2, sigma)
    }

    pub fn period(&self) -> f64 {
        self.a.period
    }

    /// λT, the only parameter of the cycling profile.
    pub fn lambda_t(&self) -> f64 {
        self.lambda() * self.period()
    }

    pub fn lambda(&self) -> f64 {
        lyapunov(&self.a)
    }

    pub fn alpha(&self, t: f64) -> f64 {
        alpha(&self.a, t)
    }

    pub fn alpha2(&self, t: f64, s: f64) -> f64 {
        alpha2(&self.a, t, s)
    }

    pub fn v_star(&self, t: f64) -> f64 {
        let g = self.g.eval(t);
        g * g / (2.0 * self.a.eval(t))
    }

    pub fn g_sq(&self, t: f64) -> f64 {
        let g = self.g.eval(t);
        g * g
    }

    pub fn log_sigma_abs(&self) -> f64 {
        self.sigma.ln().abs()
    }
}

/// α(t) = ∫₀ᵗ a(s) ds.
pub fn alpha(a: &PeriodicFunction, t: f64) -> f64 {
    a.integral(t)
}

/// α(t, s) = α(t) − α(s).
pub fn alpha2(a: &PeriodicFunction, t: f64, s: f64) -> f64 {
    a.integral(t) - a.integral(s)
}

/// λ = α(T)/T, which is the mean of `a`.
pub fn lyapunov(a: &PeriodicFunction) -> f64 {
    a.mean()
}

/// Extrema (v̄, v̲) of v⋆ over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VStarExtrema {
    pub vbar: f64,
    pub t_max: f64,
    pub vunder: f64,
    pub t_min: f64,
}

pub fn v_star_extrema(spec: &ModelSpec) -> VStarExtrema {
    let samples = PeriodicSamples::new(|t| spec.v_star(t), spec.period(), SCAN_POINTS);
    let h = samples.step();
    let tol = spec.period() * 1e-12;
    let i_min = samples.argmin();
    let (t_min, vunder) = golden_section(|t| spec.v_star(t), samples.time(i_min) - h, samples.time(i_min) + h, tol);
    let i_max = samples.argmax();
    let (t_max, neg) = golden_section(|t| -spec.v_star(t), samples.time(i_max) - h, samples.time(i_max) + h, tol);
    VStarExtrema {
        vbar: (-neg).max(samples.max()),
        t_max: t_max.rem_euclid(spec.period()),
        vunder: vunder.min(samples.min()),
        t_min: t_min.rem_euclid(spec.period()),
    }
}

/// Outcome of one hypothesis test with the offending time if any.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
    pub witness_t: Option<f64>,
}

impl Check {
    fn new(pass: bool, detail: impl Into<String>, witness_t: Option<f64>) -> Self {
        Self { pass, detail: detail.into(), witness_t }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub h1: Check,
    pub h2: Check,
    pub h3: Check,
    pub h4: Check,
    /// Strict form: exactly one minimum of ρᵖᵉʳ, quadratic.
    pub h5: Check,
    /// Weak form: the deepest minimum of ρᵖᵉʳ is quadratic.
    pub h5_weak: Check,
    pub delta: f64,
    pub delta0: f64,
    pub vbar: f64,
    pub vunder: f64,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.h1.pass && self.h2.pass && self.h3.pass && self.h4.pass && self.h5.pass
    }
}

/// Relative oscillation below which a sampled function counts as constant.
pub const FLAT_TOL: f64 = 1e-10;
/// Quadraticity threshold on (ρᵖᵉʳ)²″, relative to R²/T².
pub const QUADRATIC_TOL: f64 = 1e-8;

/// Δ₀ = Δ/(1−Δ) ∧ (δ₂−δ₁)/δ₁ ∧ 1.
pub fn delta0(delta: f64, delta1: f64, delta2: f64) -> f64 {
    (delta / (1.0 - delta)).min((delta2 - delta1) / delta1).min(1.0)
}

pub fn check_hypotheses(spec: &ModelSpec) -> HypothesisReport {
    let period = spec.period();
    let n = SCAN_POINTS;

    let (ta, amin) = spec.a.grid_min();
    let (tg, gmin) = spec.g.grid_min();
    let h1 = if amin <= 0.0 {
        Check::new(false, format!("a(t) reaches {amin:.3e}"), Some(ta))
    } else if gmin <= 0.0 {
        Check::new(false, format!("g(t) reaches {gmin:.3e}"), Some(tg))
    } else {
        Check::new(true, format!("min a = {amin:.6}, min g = {gmin:.6}; smooth by construction"), None)
    };

    let ext = v_star_extrema(spec);
    let vs = PeriodicSamples::new(|t| spec.v_star(t), period, n);
    let h2 = if vs.is_flat(FLAT_TOL) {
        Check::new(false, "v* is constant", None)
    } else {
        let maxima = vs.local_maxima();
        let minima = vs.local_minima();
        let pass = maxima.len() == 1 && minima.len() == 1 && ext.vbar > ext.vunder && ext.vunder > 0.0;
        let witness = if pass { None } else { maxima.get(1).or(minima.get(1)).map(|&i| vs.time(i)) };
        Check::new(pass, format!("{} maxima, {} minima; vbar = {:.6}, vunder = {:.6}", maxima.len(), minima.len(), ext.vbar, ext.vunder), witness)
    };

    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    for i in 0..n {
        let t = period * i as f64 / n as f64;
        let ratio = variances::v_per_minus(spec, t).max(variances::v_hat_per_plus(spec, t)) / (2.0 * spec.v_star(t));
        if ratio > worst {
            worst = ratio;
            worst_t = t;
        }
    }
    let delta = 1.0 - worst;
    let h3 = Check::new(delta > 0.0, format!("Delta = {delta:.6}"), (delta <= 0.0).then_some(worst_t));
    let delta0 = delta0(delta, spec.delta1, spec.delta2);

    let lhs = spec.delta2 / (2.0 - spec.delta2);
    let rhs = (ext.vunder / ext.vbar).sqrt();
    let h4 = Check::new(lhs <= rhs, format!("delta2/(2-delta2) = {lhs:.6} vs sqrt(vunder/vbar) = {rhs:.6}"), None);

    let rho = PeriodicSamples::new(|t| variances::rho_per_sq(spec, t), period, n);
    let (h5, h5_weak) = if rho.is_flat(FLAT_TOL) {
        (
            Check::new(false, "rho_per is constant", None),
            Check::new(false, "rho_per is constant", None),
        )
    } else {
        let minima = rho.local_minima();
        let deepest = rho.argmin();
        let (t_star, r2) = golden_section(
            |t| variances::rho_per_sq(spec, t),
            rho.time(deepest) - rho.step(),
            rho.time(deepest) + rho.step(),
            period * 1e-10,
        );
        let curvature = second_derivative(|t| variances::rho_per_sq(spec, t), t_star, period * 1e-4);
        let quadratic = curvature > QUADRATIC_TOL * r2 / (period * period);
        let strict = minima.len() == 1 && quadratic;
        let witness = if minima.len() > 1 { minima.iter().find(|&&i| i != deepest).map(|&i| rho.time(i)) } else { None };
        (
            Check::new(strict, format!("{} minima; curvature {curvature:.6e} at t = {t_star:.6}", minima.len()), witness),
            Check::new(quadratic, format!("deepest minimum at t = {t_star:.6}, curvature {curvature:.6e}"), (!quadratic).then_some(t_star)),
        )
    };

    HypothesisReport { h1, h2, h3, h4, h5, h5_weak, delta, delta0, vbar: ext.vbar, vunder: ext.vunder }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(period: f64, mean: f64, amp: f64) -> PeriodicFunction {
        PeriodicFunction::from_arrays(period, mean, &[], &[amp]).unwrap()
    }

    fn cosine(period: f64, mean: f64, amp: f64) -> PeriodicFunction {
        PeriodicFunction::from_arrays(period, mean, &[amp], &[]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let c = PeriodicFunction::constant(1.0, 2.0).unwrap();
        assert_eq!(c.eval(0.37), 2.0);
        let f = sine(1.0, 1.0, 0.5);
        assert!((f.eval(0.25) - 1.5).abs() < 1e-15);
        assert!((f.eval(1.25) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn alpha_examples() {
        let a = PeriodicFunction::constant(1.0, 2.0).unwrap();
        assert!((alpha(&a, 1.5) - 3.0).abs() < 1e-15);
        let a = sine(3.0, 1.0, 0.5);
        assert!((alpha(&a, 3.0) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn alpha_against_simpson_oracle() {
        let a = sine(1.0, 1.0, 0.5);
        // Composite Simpson with 2^12 intervals on [0, 0.5].
        let n = 4096;
        let h = 0.5 / n as f64;
        let f = |s: f64| 1.0 + 0.5 * (TAU * s).sin();
        let mut acc = f(0.0) + f(0.5);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let oracle = acc * h / 3.0;
        assert!((oracle - 0.659_154_943_091_895_3).abs() < 1e-12);
        assert!((alpha(&a, 0.5) - oracle).abs() < 1e-13);
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov(&PeriodicFunction::constant(1.0, 1.0).unwrap()), 1.0);
        assert_eq!(lyapunov(&sine(1.0, 1.0, 0.5)), 1.0);
        assert_eq!(lyapunov(&PeriodicFunction::constant(2.0, 3.0).unwrap()), 3.0);
    }

    #[test]
    fn v_star_constant_cases() {
        let one = PeriodicFunction::constant(1.0, 1.0).unwrap();
        let spec = ModelSpec::new(one.clone(), one, 0.1, 0.3, 0.3).unwrap();
        assert_eq!(spec.v_star(0.3), 0.5);
        let two = PeriodicFunction::constant(1.0, 2.0).unwrap();
        let spec = ModelSpec::new(two.clone(), two, 0.1, 0.3, 0.3).unwrap();
        assert_eq!(spec.v_star(0.8), 1.0);
    }

    #[test]
    fn v_star_maximum_of_modulated_noise() {
        let a = PeriodicFunction::constant(1.0, 1.0).unwrap();
        let g = cosine(1.0, 1.0, 0.3);
        let spec = ModelSpec::new(a, g, 0.1, 0.3, 0.3).unwrap();
        let ext = v_star_extrema(&spec);
        assert!((ext.vbar - 0.845).abs() < 1e-12);
        assert!(ext.t_max.min(1.0 - ext.t_max) < 1e-5);
        assert!((ext.vunder - 0.245).abs() < 1e-12);
        assert!((ext.t_min - 0.5).abs() < 1e-5);
    }

    #[test]
    fn constant_case_is_degenerate() {
        let one = PeriodicFunction::constant(1.0, 1.0).unwrap();
        let spec = ModelSpec::new(one.clone(), one, 0.1, 0.3, 0.3).unwrap();
        let report = check_hypotheses(&spec);
        assert!(report.h1.pass);
        assert!(!report.h2.pass);
        assert!(!report.h5.pass);
        assert!(!report.h5_weak.pass);
    }

    #[test]
    fn sample_periodic_case_hypotheses() {
        let a = PeriodicFunction::constant(2.0, 1.0).unwrap();
        let g = cosine(2.0, 1.0, 0.3);
        let spec = ModelSpec::new(a, g, 0.1, 0.3, 0.3).unwrap();
        let report = check_hypotheses(&spec);
        assert!(report.h1.pass);
        assert!(report.h2.pass, "{}", report.h2.detail);
        assert!((report.vbar - 0.845).abs() < 1e-12);
        assert!((report.vunder - 0.245).abs() < 1e-12);
        // H4: 0.3/1.7 = 0.176 vs sqrt(0.245/0.845) = 0.538.
        assert!(report.h4.pass);
        assert!(report.h5.pass, "{}", report.h5.detail);
        // Oracle for Delta: Simpson quadrature of the periodic variances on
        // every eighth scan point.
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
            let n = 2000;
            let h = (b - a) / n as f64;
            let mut acc = f(a) + f(b);
            for i in 1..n {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
            }
            acc * h / 3.0
        };
        let g2 = |s: f64| (1.0 + 0.3 * (std::f64::consts::PI * s).cos()).powi(2);
        let norm = 1.0 - (-4.0f64).exp();
        let mut worst = 0.0f64;
        for i in 0..512 {
            let t = 2.0 * i as f64 / 512.0;
            let vm = simpson(&|s| (-2.0 * (t + 2.0 - s)).exp() * g2(s), t, t + 2.0) / norm;
            let vh = simpson(&|s| (-2.0 * (s - t)).exp() * g2(s), t, t + 2.0) / norm;
            worst = worst.max(vm.max(vh) / g2(t));
        }
        assert!((report.delta - (1.0 - worst)).abs() < 1e-4, "{} vs {}", report.delta, 1.0 - worst);
        assert!(report.h3.pass);
        assert!((report.delta0 - delta0(report.delta, 0.1, 0.3)).abs() < 1e-15);
    }

    #[test]
    fn level_inequality_failure() {
        // vunder/vbar = 0.25: a = 1, g² ranging over a factor 4 (g from 1 to 2).
        let a = PeriodicFunction::constant(1.0, 1.0).unwrap();
        let g = cosine(1.0, 1.5, 0.5);
        let spec = ModelSpec::new(a, g, 0.3, 0.9, 0.3).unwrap();
        let report = check_hypotheses(&spec);
        assert!((report.vunder / report.vbar - 0.25).abs() < 1e-10);
        assert!(!report.h4.pass);
    }

    #[test]
    fn delta0_relation() {
        assert_eq!(delta0(0.2, 0.1, 0.3), 0.25);
        assert_eq!(delta0(0.9, 0.1, 0.3), 1.0);
        assert!((delta0(0.9, 0.5, 0.6) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs_rejected() {
        let one = PeriodicFunction::constant(1.0, 1.0).unwrap();
        assert!(matches!(ModelSpec::new(one.clone(), one.clone(), 0.3, 0.1, 0.3), Err(ModelError::BadLevels { .. })));
        assert!(matches!(ModelSpec::new(one.clone(), one.clone(), 0.1, 0.3, 0.0), Err(ModelError::BadSigma(_))));
        let neg = cosine(1.0, 0.2, 0.5);
        assert!(matches!(ModelSpec::new(neg, one.clone(), 0.1, 0.3, 0.3), Err(ModelError::NotPositive { .. })));
        let other = PeriodicFunction::constant(2.0, 1.0).unwrap();
        assert!(matches!(ModelSpec::new(one, other, 0.1, 0.3, 0.3), Err(ModelError::PeriodMismatch { .. })));
    }
}
