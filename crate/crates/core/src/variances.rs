//! Variance functions, the periodic rate function and its minimiser, and the
//! intrinsic time θ(t).

use serde::Serialize;

use crate::coefficients::{ModelSpec, QUADRATIC_TOL, SCAN_POINTS};
use crate::error::RateError;
use crate::numerics::{golden_section, integrate, second_derivative, PeriodicSamples};

/// Above this value of e^{−2α(t,t0)} the finite-horizon variances are
/// computed by direct quadrature instead of the periodic relation, whose
/// subtraction loses digits when both terms are comparable.
pub const DIRECT_THRESHOLD: f64 = 0.5;

fn damping(spec: &ModelSpec) -> f64 {
    1.0 - (-2.0 * spec.lambda_t()).exp()
}

/// v⁻ᵖᵉʳ(t), the periodic solution of v̇ = −2a v + g².
pub fn v_per_minus(spec: &ModelSpec, t: f64) -> f64 {
    let end = t + spec.period();
    let at_end = spec.alpha(end);
    let q = integrate(|s| (-2.0 * (at_end - spec.alpha(s))).exp() * spec.g_sq(s), t, end);
    q.value / damping(spec)
}

/// v̂₊ᵖᵉʳ(t), the periodic solution of v̇ = 2a v − g², written as
/// ∫ₜ^∞ e^{−2α(s,t)} g(s)² ds so that the integrand stays bounded by g².
pub fn v_hat_per_plus(spec: &ModelSpec, t: f64) -> f64 {
    let at = spec.alpha(t);
    let q = integrate(|s| (-2.0 * (spec.alpha(s) - at)).exp() * spec.g_sq(s), t, t + spec.period());
    q.value / damping(spec)
}

/// v₋(t, t0) = ∫_{t0}^{t} e^{−2α(t,s)} g(s)² ds.
pub fn v_minus(spec: &ModelSpec, t: f64, t0: f64) -> f64 {
    debug_assert!(t >= t0);
    if t <= t0 {
        return 0.0;
    }
    let decay = (-2.0 * spec.alpha2(t, t0)).exp();
    if decay > DIRECT_THRESHOLD {
        let at = spec.alpha(t);
        return integrate(|s| (-2.0 * (at - spec.alpha(s))).exp() * spec.g_sq(s), t0, t).value;
    }
    (v_per_minus(spec, t) - decay * v_per_minus(spec, t0)).max(0.0)
}

/// v̂₊(t, s) = ∫ₛᵗ e^{−2α(u,s)} g(u)² du.
pub fn v_hat_plus(spec: &ModelSpec, t: f64, s: f64) -> f64 {
    debug_assert!(t >= s);
    if t <= s {
        return 0.0;
    }
    let decay = (-2.0 * spec.alpha2(t, s)).exp();
    if decay > DIRECT_THRESHOLD {
        let as_ = spec.alpha(s);
        return integrate(|u| (-2.0 * (spec.alpha(u) - as_)).exp() * spec.g_sq(u), s, t).value;
    }
    (v_hat_per_plus(spec, s) - decay * v_hat_per_plus(spec, t)).max(0.0)
}

/// v₊(t, s) = e^{2α(t,s)} v̂₊(t, s).
pub fn v_plus(spec: &ModelSpec, t: f64, s: f64) -> f64 {
    (2.0 * spec.alpha2(t, s)).exp() * v_hat_plus(spec, t, s)
}

/// (ρᵖᵉʳ)² = δ₁²/v̂₊ᵖᵉʳ + (2−δ₁)²/v⁻ᵖᵉʳ.
pub fn rho_per_sq(spec: &ModelSpec, t: f64) -> f64 {
    let d1 = spec.delta1;
    d1 * d1 / v_hat_per_plus(spec, t) + (2.0 - d1).powi(2) / v_per_minus(spec, t)
}

pub fn rho_per(spec: &ModelSpec, t: f64) -> f64 {
    rho_per_sq(spec, t).sqrt()
}

/// Derived constants of the rate function at its minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub period: f64,
    pub lambda: f64,
    pub s_star: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub rho_dd: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma0: f64,
    pub theta0: f64,
    pub v_minus_s_star: f64,
    pub v_hat_s_star: f64,
    /// Another minimum within `TIE_TOL` of the deepest one, if any.
    pub tied_minimum: Option<f64>,
}

impl RateReport {
    pub fn r_sq(&self) -> f64 {
        self.r * self.r
    }

    pub fn lambda_t(&self) -> f64 {
        self.lambda * self.period
    }
}

/// Two minima closer than this (relative) in value count as tied.
pub const TIE_TOL: f64 = 1e-9;

pub fn find_rate_minimum(spec: &ModelSpec) -> Result<RateReport, RateError> {
    let period = spec.period();
    let f = |t: f64| rho_per_sq(spec, t);
    let samples = PeriodicSamples::new(f, period, SCAN_POINTS);
    if samples.is_flat(crate::coefficients::FLAT_TOL) {
        return Err(RateError::Degenerate("rho_per is constant".into()));
    }
    let h = samples.step();
    let tol = period * 1e-10;
    let mut minima: Vec<(f64, f64)> = samples
        .local_minima()
        .into_iter()
        .map(|i| golden_section(f, samples.time(i) - h, samples.time(i) + h, tol))
        .map(|(t, v)| (t.rem_euclid(period), v))
        .collect();
    if minima.is_empty() {
        return Err(RateError::Degenerate("no local minimum found".into()));
    }
    minima.sort_by(|x, y| x.1.total_cmp(&y.1));
    let deepest = minima[0].1;
    let mut tied: Vec<(f64, f64)> = minima.iter().copied().filter(|m| m.1 - deepest <= TIE_TOL * deepest).collect();
    tied.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (s_star, r_sq) = tied[0];
    let tied_minimum = tied.get(1).map(|m| m.0);

    let rho_dd = second_derivative(f, s_star, period * 1e-4);
    if !(rho_dd > QUADRATIC_TOL * r_sq / (period * period)) {
        return Err(RateError::Degenerate(format!("second derivative {rho_dd:.3e} at s* = {s_star:.6}")));
    }

    let d1 = spec.delta1;
    let vm = v_per_minus(spec, s_star);
    let vh = v_hat_per_plus(spec, s_star);
    let c0 = 4.0 * (2.0 - d1) / d1 * spec.g_sq(s_star) / (std::f64::consts::PI * rho_dd).sqrt() * vh.sqrt()
        / vm.powf(1.5)
        * (1.0 - vm / (2.0 * spec.v_star(s_star)));
    let gamma0 = (2.0 - d1).powi(2) * (-2.0 * spec.alpha(s_star)).exp() * v_per_minus(spec, 0.0) / (vm * vm);

    Ok(RateReport {
        period,
        lambda: spec.lambda(),
        s_star,
        r: r_sq.sqrt(),
        rho_dd,
        c0,
        c: 0.5 * c0,
        gamma0,
        theta0: -0.5 * gamma0.ln(),
        v_minus_s_star: vm,
        v_hat_s_star: vh,
        tied_minimum,
    })
}

/// θ(t) = α(t,s⋆) − ½ log v̂₊ᵖᵉʳ(t) − log(δ₁/v̂₊ᵖᵉʳ(s⋆)).
pub fn theta(spec: &ModelSpec, rate: &RateReport, t: f64) -> f64 {
    spec.alpha2(t, rate.s_star) - 0.5 * v_hat_per_plus(spec, t).ln() - (spec.delta1 / rate.v_hat_s_star).ln()
}

/// θ′(t) = ½ g(t)²/v̂₊ᵖᵉʳ(t).
pub fn theta_prime(spec: &ModelSpec, t: f64) -> f64 {
    0.5 * spec.g_sq(t) / v_hat_per_plus(spec, t)
}

fn period_index(rate: &RateReport, t: f64) -> f64 {
    (t / rate.period).floor()
}

/// γ(t) = δ₁² e^{−2α(t, s⋆+nT)} v̂₊ᵖᵉʳ(t)/v̂₊ᵖᵉʳ(s⋆)² for t ∈ [nT, (n+1)T).
pub fn gamma_t(spec: &ModelSpec, rate: &RateReport, t: f64) -> f64 {
    (-2.0 * theta_bar(spec, rate, t)).exp()
}

/// θ̄(t) = −½ log γ(t), evaluated in log form.
pub fn theta_bar(spec: &ModelSpec, rate: &RateReport, t: f64) -> f64 {
    let shift = rate.s_star + period_index(rate, t) * rate.period;
    spec.alpha2(t, shift) - 0.5 * v_hat_per_plus(spec, t).ln() - (spec.delta1 / rate.v_hat_s_star).ln()
}

/// log γ(t) split into its factors, for callers that need γ itself at
/// arguments where the exponential would underflow.
pub fn log_gamma_t(spec: &ModelSpec, rate: &RateReport, t: f64) -> f64 {
    -2.0 * theta_bar(spec, rate, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::PeriodicFunction;

    fn constant_spec(a: f64, g: f64, delta1: f64) -> ModelSpec {
        let a = PeriodicFunction::constant(1.0, a).unwrap();
        let g = PeriodicFunction::constant(1.0, g).unwrap();
        ModelSpec::new(a, g, delta1, delta1.max(0.3) + 0.05, 0.3).unwrap()
    }

    fn sample_spec(period: f64) -> ModelSpec {
        let a = PeriodicFunction::constant(period, 1.0).unwrap();
        let g = PeriodicFunction::from_arrays(period, 1.0, &[0.3], &[]).unwrap();
        ModelSpec::new(a, g, 0.1, 0.3, 0.3).unwrap()
    }

    /// Composite Simpson on a fine grid, independent of the library quadrature.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    fn g_sample(t: f64) -> f64 {
        let g = 1.0 + 0.3 * (std::f64::consts::TAU * t).cos();
        g * g
    }

    #[test]
    fn constant_case_closed_forms() {
        let spec = constant_spec(1.0, 1.0, 0.1);
        assert!((v_minus(&spec, 1.0, 0.0) - 0.432_332_358_381_693_6).abs() < 1e-12);
        assert!((v_hat_plus(&spec, 1.3, 0.3) - 0.432_332_358_381_693_6).abs() < 1e-12);
        assert_eq!(v_minus(&spec, 0.4, 0.4), 0.0);
        assert_eq!(v_hat_plus(&spec, 0.4, 0.4), 0.0);
        assert!((v_per_minus(&spec, 0.2) - 0.5).abs() < 1e-13);
        assert!((v_hat_per_plus(&spec, 0.2) - 0.5).abs() < 1e-13);
        let spec = constant_spec(2.0, 1.0, 0.1);
        assert!((v_per_minus(&spec, 0.7) - 0.25).abs() < 1e-13);
        assert!((v_hat_per_plus(&spec, 0.7) - 0.25).abs() < 1e-13);
    }

    #[test]
    fn v_plus_constant_case() {
        let spec = constant_spec(1.0, 1.0, 0.1);
        // v₊(t,s) = (e^{2(t−s)} − 1)/2
        assert!((v_plus(&spec, 1.0, 0.0) - 0.5 * (2f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn rho_per_constant_case() {
        let spec = constant_spec(1.0, 1.0, 0.1);
        assert!((rho_per_sq(&spec, 0.4) - 7.24).abs() < 1e-11);
        assert!((rho_per(&spec, 0.4) - 2.690_724_809_414_742).abs() < 1e-11);
        let a = PeriodicFunction::constant(1.0, 1.0).unwrap();
        let spec = ModelSpec::new(a.clone(), a, 0.999_999_999_999, 0.999_999_999_9999, 0.3).unwrap();
        assert!((rho_per_sq(&spec, 0.1) - 4.0).abs() < 1e-10);
    }

    #[test]
    fn periodic_variances_against_simpson_oracle() {
        let spec = sample_spec(1.0);
        let lt: f64 = 1.0;
        let oracle_minus = simpson(|s| (-2.0 * (1.0 - s)).exp() * g_sample(s), 0.0, 1.0, 20_000) / (1.0 - (-2.0 * lt).exp());
        let oracle_hat = simpson(|s| (-2.0 * s).exp() * g_sample(s), 0.0, 1.0, 20_000) / (1.0 - (-2.0 * lt).exp());
        assert!((v_per_minus(&spec, 0.0) - oracle_minus).abs() < 1e-12);
        assert!((v_hat_per_plus(&spec, 0.0) - oracle_hat).abs() < 1e-12);
    }

    #[test]
    fn finite_variances_against_simpson_oracle() {
        let spec = sample_spec(1.0);
        let (t, t0) = (1.7, 0.2);
        let oracle = simpson(|s| (-2.0 * (t - s)).exp() * g_sample(s), t0, t, 40_000);
        assert!((v_minus(&spec, t, t0) - oracle).abs() < 1e-11);
        let oracle = simpson(|u| (-2.0 * (u - t0)).exp() * g_sample(u), t0, t, 40_000);
        assert!((v_hat_plus(&spec, t, t0) - oracle).abs() < 1e-11);
        // Short span exercises the direct branch.
        let (t, t0) = (0.45, 0.2);
        let oracle = simpson(|s| (-2.0 * (t - s)).exp() * g_sample(s), t0, t, 40_000);
        assert!((v_minus(&spec, t, t0) - oracle).abs() < 1e-12);
    }

    #[test]
    fn rate_minimum_matches_brute_force_scan() {
        let spec = sample_spec(2.0);
        let rate = find_rate_minimum(&spec).unwrap();
        let n = 1 << 16;
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for i in 0..n {
            let t = 2.0 * i as f64 / n as f64;
            let v = rho_per_sq(&spec, t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        assert!((rate.s_star - best_t).abs() <= 2.0 * 1e-6 + 2.0 / n as f64, "{} vs {}", rate.s_star, best_t);
        assert!(rate.r_sq() <= best + 1e-12);
        assert!((rate.c0 - 2.0 * rate.c).abs() < 1e-15 * rate.c0);
        assert!((rate.theta0 + 0.5 * rate.gamma0.ln()).abs() < 1e-15);
        assert!(rate.tied_minimum.is_none());
    }

    #[test]
    fn constant_case_is_degenerate() {
        let spec = constant_spec(1.0, 1.0, 0.1);
        assert!(matches!(find_rate_minimum(&spec), Err(RateError::Degenerate(_))));
    }

    #[test]
    fn theta_identities() {
        let spec = sample_spec(2.0);
        let rate = find_rate_minimum(&spec).unwrap();
        for &t in &[0.1, 0.77, 1.9, 3.3, 7.05] {
            let jump = theta(&spec, &rate, t + 2.0) - theta(&spec, &rate, t);
            assert!((jump - spec.lambda_t()).abs() < 1e-10);
            let bar = theta_bar(&spec, &rate, t) + spec.lambda_t() * (t / 2.0).floor();
            assert!((bar - theta(&spec, &rate, t)).abs() < 1e-10);
            assert!(((-2.0 * theta_bar(&spec, &rate, t)).exp() - gamma_t(&spec, &rate, t)).abs() < 1e-15);
        }
        let flat = constant_spec(1.0, 1.0, 0.1);
        assert!((theta_prime(&flat, 0.3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theta_prime_is_derivative_of_theta() {
        let spec = sample_spec(2.0);
        let rate = find_rate_minimum(&spec).unwrap();
        let h = 1e-4;
        for &t in &[0.3, 1.1, 4.6] {
            let fd = (theta(&spec, &rate, t + h) - theta(&spec, &rate, t - h)) / (2.0 * h);
            assert!((fd - theta_prime(&spec, t)).abs() < 1e-7);
        }
    }
}
