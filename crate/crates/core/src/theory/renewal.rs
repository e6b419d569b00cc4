//! The renewal series q = p₁ + Σₙ ∫ p₁ Kₙ evaluated on a uniform grid.

use serde::Serialize;

use crate::coefficients::{HypothesisReport, ModelSpec};
use crate::error::VolterraError;
use crate::exec::{self, Mode};
use crate::volterra::{model_table, solve_table, ModelLeg};

use super::{c_plus, crossing_density_plus, rho_plus_sq};

/// Correction terms below this fraction of p₁ are not computed.
pub const TERM_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenewalConfig {
    /// Grid steps per period on [s, t].
    pub steps_per_period: usize,
    pub mode: Mode,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        Self { steps_per_period: 64, mode: Mode::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalSeries {
    pub t: f64,
    pub s: f64,
    pub p1: f64,
    /// Computed corrections ∫ p₁(t,u)Kₙ(u,s)du, n = 1, 2, ….
    pub terms: Vec<f64>,
    pub q: f64,
    /// Grid supremum of K.
    pub kernel_sup: f64,
    /// (M(t−s))ᴺ/N!.
    pub remainder_bound: f64,
    /// c₊e^{−ρ₊²/2σ²}/σ.
    pub sandwich_lower: f64,
    /// c̄₊e^{−ρ₊²/2σ²}/σ with c̄₊ = c₊ + (t−s)σ⁻²(1+c₊)e^{−Δ₀²/σ²}.
    pub sandwich_upper: f64,
    /// Number of terms skipped below [`TERM_CUTOFF`].
    pub skipped: usize,
}

/// (x)ᴺ/N!.
pub fn factorial_bound(x: f64, n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * x / k as f64)
}

fn trapezoid_weight(i: usize, lo: usize, hi: usize) -> f64 {
    if i == lo || i == hi {
        0.5
    } else {
        1.0
    }
}

/// Evaluates q(t,s) with `n_terms` correction terms. ψ↑ and ψ↓ come from
/// one Volterra solve per grid node; ψ↓ is not killed at +1, so q is
/// biased upwards.
pub fn renewal_series(
    spec: &ModelSpec,
    hyp: &HypothesisReport,
    t: f64,
    s: f64,
    n_terms: usize,
    cfg: &RenewalConfig,
) -> Result<RenewalSeries, VolterraError> {
    if !(t > s) {
        return Err(VolterraError::Invalid(format!("renewal series needs t > s, got t={t}, s={s}")));
    }
    let sig = spec.sigma;
    let p1 = crossing_density_plus(spec, t, s);
    let span = t - s;
    let cp = c_plus(spec, t, s);
    let e = (-rho_plus_sq(spec, t, s) / (2.0 * sig * sig)).exp() / sig;
    let d0 = hyp.delta0;
    let cbar = cp + span / (sig * sig) * (1.0 + cp) * (-d0 * d0 / (sig * sig)).exp();
    let mut out = RenewalSeries {
        t,
        s,
        p1,
        terms: Vec::new(),
        q: p1,
        kernel_sup: 0.0,
        remainder_bound: if n_terms == 0 { 1.0 } else { 0.0 },
        sandwich_lower: cp * e,
        sandwich_upper: cbar * e,
        skipped: 0,
    };
    if n_terms == 0 {
        return Ok(out);
    }

    let n = ((span / spec.period()) * cfg.steps_per_period as f64).ceil().max(2.0) as usize;
    let h = span / n as f64;
    let node = |i: usize| s + i as f64 * h;

    // up[j][m] = ψ↑(u_{j+m}, u_j), down[l][m] = ψ↓(u_{l+m}, u_l).
    let solve = |leg: ModelLeg| {
        exec::map_indices(cfg.mode, n, |j| {
            // The solver needs two steps; the extra node is dropped.
            let steps = (n - j).max(2);
            solve_table(&model_table(spec, leg, node(j), h, steps)).map(|mut sol| {
                sol.psi.truncate(n - j + 1);
                sol.psi
            })
        })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
    };
    let up = solve(ModelLeg::Up)?;
    let down = solve(ModelLeg::Down)?;

    // kernel[i][l] = K(u_i, u_l) = ∫ ψ↑(u_i, v) ψ↓(v, u_l) dv for l < i.
    let kernel: Vec<Vec<f64>> = exec::map_indices(cfg.mode, n + 1, |i| {
        (0..i)
            .map(|l| {
                let sum: f64 = (l..=i)
                    .map(|j| {
                        let psi_up = if j < i { up[j][i - j] } else { 0.0 };
                        let psi_down = if j > l { down[l][j - l] } else { 0.0 };
                        trapezoid_weight(j, l, i) * psi_up * psi_down
                    })
                    .sum();
                h * sum
            })
            .collect()
    });
    out.kernel_sup = kernel.iter().flatten().fold(0.0, |m: f64, &k| m.max(k.abs()));

    let p1_grid: Vec<f64> = (0..=n).map(|i| crossing_density_plus(spec, t, node(i))).collect();
    // kn[i] = Kₙ(u_i, s).
    let mut kn: Vec<f64> = (0..=n).map(|i| if i == 0 { 0.0 } else { kernel[i][0] }).collect();
    for term in 1..=n_terms {
        let corr = h * (0..=n).map(|i| trapezoid_weight(i, 0, n) * p1_grid[i] * kn[i]).sum::<f64>();
        if corr.abs() < TERM_CUTOFF * p1.abs().max(f64::MIN_POSITIVE) {
            out.skipped = n_terms - term + 1;
            break;
        }
        out.terms.push(corr);
        out.q += corr;
        if term < n_terms {
            kn = (0..=n)
                .map(|i| h * (0..i).map(|l| trapezoid_weight(l, 0, i) * kernel[i][l] * kn[l]).sum::<f64>())
                .collect();
        }
    }
    out.remainder_bound = factorial_bound(out.kernel_sup * span, n_terms);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::coefficients::{check_hypotheses, PeriodicFunction};

    fn spec(sigma: f64) -> ModelSpec {
        let a = PeriodicFunction::constant(1.0, 1.0).unwrap();
        let g = PeriodicFunction::from_arrays(1.0, 1.8, &[0.36], &[]).unwrap();
        ModelSpec::new(a, g, 0.5, 0.75, sigma).unwrap()
    }

    fn cfg(mode: Mode) -> RenewalConfig {
        RenewalConfig { steps_per_period: 32, mode }
    }

    #[test]
    fn zero_terms_is_p1() {
        let sp = spec(0.3);
        let hyp = check_hypotheses(&sp);
        let r = renewal_series(&sp, &hyp, 2.0, 0.5, 0, &cfg(Mode::Sequential)).unwrap();
        assert_eq!(r.q, crossing_density_plus(&sp, 2.0, 0.5));
        assert!(r.terms.is_empty());
        assert!(renewal_series(&sp, &hyp, 0.5, 0.5, 1, &cfg(Mode::Sequential)).is_err());
    }

    #[test]
    fn series_decays_and_sits_in_sandwich() {
        let sp = spec(0.2);
        let hyp = check_hypotheses(&sp);
        let r = renewal_series(&sp, &hyp, 3.0, 0.5, 4, &cfg(Mode::Sequential)).unwrap();
        assert!(r.terms.iter().all(|&x| x >= 0.0));
        assert!(r.terms.windows(2).all(|w| w[1] < w[0]));
        assert!(r.sandwich_lower <= r.q && r.q <= r.sandwich_upper);
        assert!(r.remainder_bound < 1e-3);
    }

    #[test]
    fn modes_agree() {
        let sp = spec(0.3);
        let hyp = check_hypotheses(&sp);
        let a = renewal_series(&sp, &hyp, 2.5, 0.25, 2, &cfg(Mode::Sequential)).unwrap();
        let b = renewal_series(&sp, &hyp, 2.5, 0.25, 2, &cfg(Mode::Parallel)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn factorial_bound_values() {
        assert_eq!(factorial_bound(1.0, 0), 1.0);
        assert!((factorial_bound(1.0, 3) - 1.0 / 6.0).abs() < 1e-16);
        assert!((factorial_bound(2.0, 4) - 16.0 / 24.0).abs() < 1e-15);
    }
}
