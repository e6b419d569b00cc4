//! The universal cycling profile P(x) and the finite sums it approximates.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::Serialize;

use crate::gamma::ln_gamma;

/// Relative size of the last retained term in the bilateral sums.
pub const SUM_REL_TOL: f64 = 1e-16;

/// x ↦ ½ exp(−2x − ½e^{−2x}); exactly 0 once the inner exponential overflows.
pub fn a_func(x: f64) -> f64 {
    let e = (-2.0 * x).exp();
    if !e.is_finite() {
        return 0.0;
    }
    0.5 * (-2.0 * x - 0.5 * e).exp()
}

/// x ↦ exp(−½e^{−2x}).
pub fn b_func(x: f64) -> f64 {
    let e = (-2.0 * x).exp();
    if !e.is_finite() {
        return 0.0;
    }
    (-0.5 * e).exp()
}

/// The single parameter λT of the profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CyclingParams {
    pub lambda_t: f64,
}

impl CyclingParams {
    pub fn new(lambda_t: f64) -> Self {
        assert!(lambda_t > 0.0 && lambda_t.is_finite(), "lambda*T must be positive");
        Self { lambda_t }
    }

    /// Highest retained Fourier mode.
    pub fn q_max(&self) -> i64 {
        ((2.0 * self.lambda_t / (PI * PI)) * 37.0).ceil() as i64 + 5
    }
}

/// Σ_ℓ A(λT ℓ + c), summed outward from the largest term.
fn bilateral_sum(lambda_t: f64, c: f64) -> f64 {
    // A peaks at −ln 2 / 2.
    let peak = (-0.5 * LN_2 - c) / lambda_t;
    let l0 = peak.round();
    let mut total = a_func(lambda_t * l0 + c);
    for dir in [1.0, -1.0] {
        let mut l = l0 + dir;
        loop {
            let term = a_func(lambda_t * l + c);
            total += term;
            if term <= SUM_REL_TOL * total {
                break;
            }
            l += dir;
        }
    }
    total
}

/// P(x) = Σ_ℓ A(λT(ℓ − x)).
pub fn profile_sum(p: CyclingParams, x: f64) -> f64 {
    // Reducing x first keeps λT·x small for the sum's arguments.
    let x = x - x.floor();
    bilateral_sum(p.lambda_t, -p.lambda_t * x)
}

/// P̂(q) = (1/2λT) 2^{−iπq/λT} Γ(1 − iπq/λT).
pub fn fourier_coefficient(p: CyclingParams, q: i64) -> Complex64 {
    let y = PI * q as f64 / p.lambda_t;
    let log = ln_gamma(Complex64::new(1.0, -y)) + Complex64::new(0.0, -y * LN_2);
    log.exp() / (2.0 * p.lambda_t)
}

/// Truncated Fourier series of P.
pub fn profile_fourier(p: CyclingParams, x: f64) -> f64 {
    let x = x - x.floor();
    let mut total = fourier_coefficient(p, 0).re;
    for q in 1..=p.q_max() {
        let phase = Complex64::from_polar(1.0, 2.0 * PI * q as f64 * x);
        total += 2.0 * (fourier_coefficient(p, q) * phase).re;
    }
    total
}

/// Inputs of the finite sum S̃(n, η, t) at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SumParams {
    pub n: u32,
    /// η = |log σ|.
    pub eta: f64,
    pub lambda_t: f64,
    pub theta0: f64,
    /// θ̄(t), the sawtooth part of the intrinsic time.
    pub theta_bar: f64,
}

impl SumParams {
    pub fn sigma(&self) -> f64 {
        (-self.eta).exp()
    }
}

/// S̃(n,η,t) = Σ_{ℓ=0}^{n−1} A(ℓλT − η + θ̄(t)) B((n−ℓ)λT − η + θ₀).
pub fn s_tilde(sp: &SumParams) -> f64 {
    assert!(sp.n >= 1, "S~ needs n >= 1");
    let lt = sp.lambda_t;
    (0..sp.n)
        .map(|l| {
            let l = l as f64;
            a_func(l * lt - sp.eta + sp.theta_bar) * b_func((sp.n as f64 - l) * lt - sp.eta + sp.theta0)
        })
        .sum()
}

/// Ŝ(η, t) = Σ_ℓ A(ℓλT − η + θ(t)) = P((η − θ(t))/λT).
pub fn s_hat(p: CyclingParams, eta: f64, theta: f64) -> f64 {
    let shift = -eta + theta;
    // Reduce the offset modulo λT so that the bilateral sum starts near ℓ = 0.
    let k = (shift / p.lambda_t).floor();
    bilateral_sum(p.lambda_t, shift - k * p.lambda_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(lambda_t: f64, x: f64) -> f64 {
        (-60..=60).map(|l| a_func(lambda_t * (l as f64 - x))).sum()
    }

    #[test]
    fn a_and_b_values() {
        assert!((a_func(-0.5 * LN_2) - (-1f64).exp()).abs() < 1e-16);
        assert!((b_func(0.0) - (-0.5f64).exp()).abs() < 1e-16);
        let tail = 0.5 * (-40f64).exp();
        assert!((a_func(20.0) / tail - 1.0).abs() < 1e-15);
        assert_eq!(a_func(-400.0), 0.0);
        assert_eq!(b_func(-400.0), 0.0);
        assert_eq!(b_func(400.0), 1.0);
    }

    #[test]
    fn sum_matches_brute_force() {
        for &(lt, x) in &[(1.0, 0.0), (5.0, 0.5), (0.5, 0.37), (2.0, 0.9)] {
            let p = CyclingParams::new(lt);
            let b = brute(lt, x);
            assert!((profile_sum(p, x) / b - 1.0).abs() < 1e-14, "lt = {lt}");
        }
        let p = CyclingParams::new(5.0);
        let dominant = (-60..=60).map(|l| a_func(5.0 * (l as f64 - 0.5))).fold(0.0, f64::max);
        assert!((profile_sum(p, 0.5) / dominant - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zeroth_coefficient() {
        let p = CyclingParams::new(1.0);
        let c = fourier_coefficient(p, 0);
        assert!((c.re - 0.5).abs() < 1e-15 && c.im.abs() < 1e-15);
        for q in 1..=5 {
            let diff = fourier_coefficient(p, -q) - fourier_coefficient(p, q).conj();
            assert!(diff.norm() < 1e-15);
        }
    }

    #[test]
    fn representations_agree() {
        let p = CyclingParams::new(0.5);
        assert!((profile_fourier(p, 0.37) - profile_sum(p, 0.37)).abs() < 1e-9);
        for &lt in &[0.3, 0.5, 1.0, 2.0, 5.0] {
            let p = CyclingParams::new(lt);
            let worst = (0..512)
                .map(|i| i as f64 / 512.0)
                .map(|x| (profile_sum(p, x) - profile_fourier(p, x)).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-8, "lt = {lt}: {worst:e}");
        }
    }

    #[test]
    fn s_tilde_single_term() {
        let sp = SumParams { n: 1, eta: 2.0, lambda_t: 1.0, theta0: 0.3, theta_bar: 0.7 };
        let expected = a_func(0.7 - 2.0) * b_func(1.0 - 2.0 + 0.3);
        assert_eq!(s_tilde(&sp), expected);
    }

    #[test]
    fn s_hat_is_profile() {
        let p = CyclingParams::new(1.3);
        for &(eta, th) in &[(3.0, 0.2), (5.5, 12.0), (2.0, -4.0)] {
            let expected = profile_sum(p, (eta - th) / 1.3);
            assert!((s_hat(p, eta, th) / expected - 1.0).abs() < 1e-13);
        }
    }
}
