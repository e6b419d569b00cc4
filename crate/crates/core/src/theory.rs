//! Closed-form first-passage densities of the two-level model and the
//! first-passage law p₊(t) in its three regimes.

use std::f64::consts::PI;

use serde::Serialize;

use crate::coefficients::{check_hypotheses, HypothesisReport, ModelSpec};
use crate::error::{RateError, RegimeError};
use crate::exec::{self, Mode};
use crate::numerics::{integrate, normal_cdf, PeriodicSamples};
use crate::profile::{profile_sum, s_tilde, CyclingParams, SumParams};
use crate::variances::{self as var, RateReport};

mod renewal;

pub use renewal::{factorial_bound, renewal_series, RenewalConfig, RenewalSeries, TERM_CUTOFF};

/// Default β in the metastable time window σ³e^{βΔ₀²/2σ²}.
pub const DEFAULT_BETA: f64 = 0.25;

/// A leading-order value with its relative error bound kept separate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracketed {
    pub value: f64,
    pub rel_bound: f64,
}

/// Everything the density formulas share for one scenario.
#[derive(Debug, Clone)]
pub struct Theory {
    pub spec: ModelSpec,
    pub rate: RateReport,
    pub hyp: HypothesisReport,
    pub beta: f64,
}

impl Theory {
    pub fn new(spec: ModelSpec) -> Result<Self, RateError> {
        let rate = var::find_rate_minimum(&spec)?;
        let hyp = check_hypotheses(&spec);
        Ok(Self { spec, rate, hyp, beta: DEFAULT_BETA })
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Same coefficients at another noise level; the rate data do not depend on σ.
    pub fn at_sigma(&self, sigma: f64) -> Self {
        let mut next = self.clone();
        next.spec.sigma = sigma;
        next
    }

    pub fn eta(&self) -> f64 {
        self.spec.log_sigma_abs()
    }

    pub fn profile(&self) -> CyclingParams {
        CyclingParams::new(self.rate.lambda_t())
    }
}

// ---------------------------------------------------------------------------
// Leaving the stable orbit

/// ρ₋(s,0)² = (2−δ₁)²/v₋(s,0).
pub fn rho_minus_sq(spec: &ModelSpec, s: f64) -> f64 {
    (2.0 - spec.delta1).powi(2) / var::v_minus(spec, s, 0.0)
}

/// Leading prefactor c₋(s,0), clamped at zero.
pub fn c_minus(spec: &ModelSpec, s: f64) -> f64 {
    let v = var::v_minus(spec, s, 0.0);
    let c = (2.0 - spec.delta1) / (2.0 * PI).sqrt() * (1.0 / v - 1.0 / (2.0 * spec.v_star(s))) * spec.g_sq(s) / v.sqrt();
    c.max(0.0)
}

/// ψ₋(s,0) = (1/σ)c₋ e^{−ρ₋²/2σ²}; zero at s ≤ 0.
pub fn psi_minus(spec: &ModelSpec, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let sig = spec.sigma;
    c_minus(spec, s) * (-rho_minus_sq(spec, s) / (2.0 * sig * sig)).exp() / sig
}

/// ψ₋ with the relative bracket (1/Δ)(σ/Δ² + e^{−Δ²/σ²} s/σ).
pub fn psi_minus_bracketed(spec: &ModelSpec, delta: f64, s: f64) -> Bracketed {
    let sig = spec.sigma;
    let rel = if delta > 0.0 {
        (sig / (delta * delta) + (-delta * delta / (sig * sig)).exp() * s / sig) / delta
    } else {
        f64::INFINITY
    };
    Bracketed { value: psi_minus(spec, s), rel_bound: rel }
}

// ---------------------------------------------------------------------------
// Reaching the unstable orbit

/// ρ₊(t,s)² = δ₁²/v̂₊(t,s).
pub fn rho_plus_sq(spec: &ModelSpec, t: f64, s: f64) -> f64 {
    spec.delta1 * spec.delta1 / var::v_hat_plus(spec, t, s)
}

/// P{τ̃₊ ≤ t} = 2Φ(−ρ₊/σ) for the plus leg started at (s, 1−δ₁).
pub fn crossing_cdf_plus(spec: &ModelSpec, t: f64, s: f64) -> f64 {
    if t <= s {
        return 0.0;
    }
    2.0 * normal_cdf(-rho_plus_sq(spec, t, s).sqrt() / spec.sigma)
}

/// Leading prefactor c₊(t,s) = (δ₁/√2π) g² e^{−2α(t,s)} v̂₊^{−3/2}.
pub fn c_plus(spec: &ModelSpec, t: f64, s: f64) -> f64 {
    if t <= s {
        return 0.0;
    }
    let vh = var::v_hat_plus(spec, t, s);
    spec.delta1 / (2.0 * PI).sqrt() * spec.g_sq(t) * (-2.0 * spec.alpha2(t, s)).exp() / vh.powf(1.5)
}

pub fn crossing_density_plus(spec: &ModelSpec, t: f64, s: f64) -> f64 {
    if t <= s {
        return 0.0;
    }
    let sig = spec.sigma;
    c_plus(spec, t, s) * (-rho_plus_sq(spec, t, s) / (2.0 * sig * sig)).exp() / sig
}

/// ρ↓(u,s)² = (δ₁ − δ₂e^{−α(u,s)})²/v̂₊(u,s).
pub fn psi_down_rate(spec: &ModelSpec, u: f64, s: f64) -> f64 {
    let num = spec.delta1 - spec.delta2 * (-spec.alpha2(u, s)).exp();
    num * num / var::v_hat_plus(spec, u, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct P1Density {
    pub value: f64,
    /// Bound on e^{−α(t,s)}e^{−Δ₀²/σ²}/σ relative to the value.
    pub rel_bound: f64,
    /// False when H3 fails; the prefactor may then be smaller.
    pub h3_ok: bool,
}

/// p₁(t,s) at leading order, which coincides with the crossing density.
pub fn p1_density(spec: &ModelSpec, hyp: &HypothesisReport, t: f64, s: f64) -> P1Density {
    let sig = spec.sigma;
    let lead = crossing_density_plus(spec, t, s);
    let c = c_plus(spec, t, s);
    let correction = (-spec.alpha2(t, s)).exp() * (-hyp.delta0 * hyp.delta0 / (sig * sig)).exp() / sig;
    P1Density { value: lead, rel_bound: if c > 0.0 { correction / c } else { f64::INFINITY }, h3_ok: hyp.h3.pass }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelRates {
    pub rho_up_sq: f64,
    pub rho_up_plus_sq: f64,
}

/// ρ↑(u,v)² and ρ↑⁺(u,v)².
pub fn kernel_rates(spec: &ModelSpec, u: f64, v: f64) -> KernelRates {
    let xi = (-spec.alpha2(u, v)).exp();
    let (d1, d2) = (spec.delta1, spec.delta2);
    let up = ((2.0 - d1) - (2.0 - d2) * xi).powi(2) / var::v_minus(spec, u, v);
    let up_plus = (d2 - d1 * xi).powi(2) / var::v_hat_plus(spec, u, v);
    KernelRates { rho_up_sq: up, rho_up_plus_sq: up_plus }
}

/// K(u,s) ≤ (const/σ) e^{−(δ₂−δ₁)²/2v̄σ²}, with const = 1.
pub fn kernel_bound(spec: &ModelSpec, vbar: f64) -> f64 {
    let sig = spec.sigma;
    (-(spec.delta2 - spec.delta1).powi(2) / (2.0 * vbar * sig * sig)).exp() / sig
}

// ---------------------------------------------------------------------------
// The exit law

/// ρ⁽⁰⁾(t,s)² = ρ₊(t,s)² + ρ₋(s,0)².
pub fn rho0_sq(spec: &ModelSpec, t: f64, s: f64) -> f64 {
    rho_plus_sq(spec, t, s) + rho_minus_sq(spec, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Transient,
    Metastable,
    Asymptotic,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Transient => "transient",
            Regime::Metastable => "metastable",
            Regime::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeClassification {
    pub t: f64,
    pub regime: Regime,
    /// Time 2|log σ|/λ at which the transient regime ends.
    pub transient_end: f64,
    /// σ³e^{βΔ₀²/2σ²}, the upper end of the proven metastable window (in α).
    pub metastable_limit: f64,
    /// e^{R/2σ²}, the onset of the asymptotic regime (in α).
    pub asymptotic_threshold: f64,
}

pub fn classify_regime(th: &Theory, t: f64) -> RegimeClassification {
    let spec = &th.spec;
    let sig = spec.sigma;
    let eta = th.eta();
    let alpha = spec.alpha(t);
    let asymptotic_threshold = (th.rate.r / (2.0 * sig * sig)).exp();
    let regime = if alpha < 2.0 * eta {
        Regime::Transient
    } else if alpha >= asymptotic_threshold {
        Regime::Asymptotic
    } else {
        Regime::Metastable
    };
    RegimeClassification {
        t,
        regime,
        transient_end: 2.0 * eta / th.rate.lambda,
        metastable_limit: metastable_limit(th),
        asymptotic_threshold,
    }
}

pub fn metastable_limit(th: &Theory) -> f64 {
    let sig = th.spec.sigma;
    let d0 = th.hyp.delta0;
    sig.powi(3) * (th.beta * d0 * d0 / (2.0 * sig * sig)).exp()
}

/// e^{−R²/2σ²}.
pub fn exponential_factor(th: &Theory) -> f64 {
    (-th.rate.r_sq() / (2.0 * th.spec.sigma * th.spec.sigma)).exp()
}

fn check_sigma(sigma: f64) -> Result<(), RegimeError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(RegimeError::SigmaOutOfRange(sigma));
    }
    Ok(())
}

/// Inputs of S̃ at time t for the current σ.
pub fn sum_params(th: &Theory, t: f64) -> SumParams {
    let n = (t / th.rate.period).floor();
    SumParams {
        n: n.max(0.0) as u32,
        eta: th.eta(),
        lambda_t: th.rate.lambda_t(),
        theta0: th.rate.theta0,
        theta_bar: var::theta_bar(&th.spec, &th.rate, t),
    }
}

/// c(t,σ) from the finite sum: σ C₀ θ′(t) S̃(n,η,t).
pub fn laplace_prefactor(th: &Theory, t: f64) -> Result<f64, RegimeError> {
    let sig = th.spec.sigma;
    check_sigma(sig)?;
    let sp = sum_params(th, t);
    let nlt = sp.n as f64 * sp.lambda_t;
    if sp.n < 4 || nlt < 2.0 * sp.eta {
        return Err(RegimeError::LaplacePrecondition { n: sp.n as i64, n_lambda_t: nlt, threshold: 2.0 * sp.eta });
    }
    // (1/σ)·C·(g²/v̂)·σ² S̃ with C = C₀/2 and g²/v̂ = 2θ′.
    Ok(sig * th.rate.c0 * var::theta_prime(&th.spec, t) * s_tilde(&sp))
}

/// p₊(t) from the finite Laplace sum.
pub fn p_plus_laplace(th: &Theory, t: f64) -> Result<f64, RegimeError> {
    Ok(laplace_prefactor(th, t)? * exponential_factor(th))
}

/// Argument (|log σ| − θ(t))/λT of the profile.
pub fn profile_argument(th: &Theory, t: f64) -> f64 {
    (th.eta() - var::theta(&th.spec, &th.rate, t)) / th.rate.lambda_t()
}

/// σ C₀ θ′(t) P((|log σ| − θ(t))/λT), with no check on the time window.
pub fn metastable_leading_term(th: &Theory, t: f64) -> f64 {
    th.spec.sigma * th.rate.c0 * var::theta_prime(&th.spec, t) * profile_sum(th.profile(), profile_argument(th, t))
}

/// The metastable prefactor with its error bound O(σ + e^{−α(t)}/σ²),
/// checked against the validity window 2|log σ| ≤ α(t) ≤ σ³e^{βΔ₀²/2σ²}.
pub fn metastable_prefactor(th: &Theory, t: f64) -> Result<Bracketed, RegimeError> {
    let sig = th.spec.sigma;
    check_sigma(sig)?;
    let alpha = th.spec.alpha(t);
    let threshold = 2.0 * th.eta();
    if alpha < threshold {
        return Err(RegimeError::Transient { t, alpha, threshold });
    }
    let limit = metastable_limit(th);
    if alpha > limit {
        return Err(RegimeError::BeyondMetastable { t, alpha, limit });
    }
    Ok(Bracketed { value: metastable_leading_term(th, t), rel_bound: sig + (-alpha).exp() / (sig * sig) })
}

pub fn p_plus_metastable(th: &Theory, t: f64) -> Result<Bracketed, RegimeError> {
    let b = metastable_prefactor(th, t)?;
    Ok(Bracketed { value: b.value * exponential_factor(th), rel_bound: b.rel_bound })
}

/// L(t) = 2β₁β₂ with β₁ = δ₁v̂₊ᵖᵉʳ(t)^{1/2}/v̄ and β₂ = (2−δ₁)v⁻ᵖᵉʳ(0)^{1/2}/v̄.
pub fn transient_l(th: &Theory, t: f64) -> f64 {
    let vbar = th.hyp.vbar;
    let b1 = th.spec.delta1 * var::v_hat_per_plus(&th.spec, t).sqrt() / vbar;
    let b2 = (2.0 - th.spec.delta1) * var::v_per_minus(&th.spec, 0.0).sqrt() / vbar;
    2.0 * b1 * b2
}

/// Leading constant of the transient bound, K = C₀ · max θ′ · max P · e^{L̄/2},
/// where L̄ is the largest L over a period. This makes the bound at the
/// regime boundary exceed the metastable prefactor by at least σ^{−3}.
pub fn transient_constant(th: &Theory) -> f64 {
    let period = th.rate.period;
    let n = 256;
    let theta_max = PeriodicSamples::new(|t| var::theta_prime(&th.spec, t), period, n).max();
    let l_max = PeriodicSamples::new(|t| transient_l(th, t), period, n).max();
    let p = th.profile();
    let p_max = PeriodicSamples::new(|x| profile_sum(p, x), 1.0, n).max();
    th.rate.c0 * theta_max * p_max * (0.5 * l_max).exp()
}

/// Upper bound (K/σ²) exp(−L e^{−α(t)}/2σ²) e^{−R²/2σ²} for the transient
/// regime. L enters with 1/2σ² because ρ⁽⁰⁾² ≥ R² + L e^{−α(t)}.
pub fn p_plus_transient_bound(th: &Theory, k: f64, t: f64) -> f64 {
    transient_prefactor_bound(th, k, t) * exponential_factor(th)
}

/// The prefactor part of [`p_plus_transient_bound`].
pub fn transient_prefactor_bound(th: &Theory, k: f64, t: f64) -> f64 {
    let sig2 = th.spec.sigma * th.spec.sigma;
    k / sig2 * (-transient_l(th, t) * (-th.spec.alpha(t)).exp() / (2.0 * sig2)).exp()
}

/// ∫_{nT}^{(n+1)T} θ′(t) P((|log σ| − θ(t))/λT) dt, which equals 1/2.
pub fn period_mass(th: &Theory, n: u32) -> f64 {
    let p = th.profile();
    let a = n as f64 * th.rate.period;
    integrate(|t| var::theta_prime(&th.spec, t) * profile_sum(p, profile_argument(th, t)), a, a + th.rate.period).value
}

/// Leading-order exit law ∫₀ᵗ p₁(t,s)ψ₋(s,0) ds before the Laplace
/// reduction, integrated period by period.
pub fn p_plus_integral(spec: &ModelSpec, t: f64) -> f64 {
    let period = spec.period();
    let mut total = 0.0;
    let mut a = 0.0;
    while a < t {
        let b = (a + period).min(t);
        total += integrate(|s| crossing_density_plus(spec, t, s) * psi_minus(spec, s), a, b).value;
        a = b;
    }
    total
}

/// Theory curve on a time grid: one row per t.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryPoint {
    pub t: f64,
    pub regime: Regime,
    /// Prefactors c(t,σ); the density is the prefactor times e^{−R²/2σ²}.
    pub metastable: f64,
    pub laplace: Option<f64>,
    pub transient_bound: f64,
    pub theta: f64,
    pub profile_argument: f64,
}

pub fn theory_curve(th: &Theory, times: &[f64], mode: Mode) -> Vec<TheoryPoint> {
    let k = transient_constant(th);
    exec::map_slice(mode, times, |&t| TheoryPoint {
        t,
        regime: classify_regime(th, t).regime,
        metastable: metastable_leading_term(th, t),
        laplace: laplace_prefactor(th, t).ok(),
        transient_bound: transient_prefactor_bound(th, k, t),
        theta: var::theta(&th.spec, &th.rate, t),
        profile_argument: profile_argument(th, t),
    })
}
