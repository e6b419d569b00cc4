//! First-passage density of a zero-drift Gaussian process z_t with variance
//! σ²v(t) through a moving level d(t), by the second-kind integral equation
//!
//!   ψ(t) = b₀(t)F(t) − ∫₀ᵗ b̃(t,s) F(t|s) ψ(s) ds.
//!
//! The solver works in prefactor space, ψ = (1/σ) c e^{−d²/2σ²v}, where the
//! equation reads c = c₀ − (1/σ)∫ c̃ c e^{−r/2σ²}. Problems are tabulated on a
//! uniform grid in a scaled form v = S²w, d = S·δ with S = e^{k(t)}, so that
//! exponentially growing variances never have to be formed explicitly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coefficients::ModelSpec;
use crate::error::VolterraError;
use std::sync::LazyLock;

use crate::numerics::{GaussLegendre, GL16};

static GL8: LazyLock<GaussLegendre> = LazyLock::new(|| GaussLegendre::new(8));

type Func = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Level-crossing problem given by explicit callables (v, v′) and (d, d′).
pub struct FptProblem {
    pub v: Func,
    pub dv: Func,
    pub d: Func,
    pub dd: Func,
    pub sigma: f64,
}

impl std::fmt::Debug for FptProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FptProblem").field("sigma", &self.sigma).finish_non_exhaustive()
    }
}

/// The five coefficient functions of the second-kind equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryCoeffs {
    pub b0: f64,
    pub b_tilde: f64,
    pub c0: f64,
    pub c_tilde: f64,
    pub r: f64,
}

impl FptProblem {
    pub fn new(v: Func, dv: Func, d: Func, dd: Func, sigma: f64) -> Self {
        Self { v, dv, d, dd, sigma }
    }

    /// v(t) = t and d ≡ level.
    pub fn constant_boundary(level: f64, sigma: f64) -> Self {
        Self::new(Box::new(|t| t), Box::new(|_| 1.0), Box::new(move |_| level), Box::new(|_| 0.0), sigma)
    }

    /// Polynomial v and d, coefficients in increasing degree.
    pub fn polynomial(v: Vec<f64>, d: Vec<f64>, sigma: f64) -> Self {
        let dv = derivative_coeffs(&v);
        let dd = derivative_coeffs(&d);
        Self::new(
            Box::new(move |t| horner(&v, t)),
            Box::new(move |t| horner(&dv, t)),
            Box::new(move |t| horner(&d, t)),
            Box::new(move |t| horner(&dd, t)),
            sigma,
        )
    }

    /// f(t, y | s, x), the Gaussian transition density of z.
    pub fn transition_density(&self, t: f64, y: f64, s: f64, x: f64) -> Result<f64, VolterraError> {
        if t <= s {
            return Err(VolterraError::Invalid(format!("transition density needs t > s (t={t}, s={s})")));
        }
        let var = (self.v)(t) - (self.v)(s);
        let sig2 = self.sigma * self.sigma;
        Ok((-(y - x).powi(2) / (2.0 * sig2 * var)).exp() / (self.sigma * (2.0 * PI * var).sqrt()))
    }

    /// b₀(t), b̃(t,s), c₀(t), c̃(t,s) and r(t,s).
    pub fn boundary_coeffs(&self, t: f64, s: f64) -> BoundaryCoeffs {
        let (vt, vs) = ((self.v)(t), (self.v)(s));
        let (dt, ds) = ((self.d)(t), (self.d)(s));
        let (dvt, ddt) = ((self.dv)(t), (self.dd)(t));
        let vts = vt - vs;
        let b0 = dvt * (dt / vt - ddt / dvt);
        let b_tilde = dvt * ((dt - ds) / vts - ddt / dvt);
        let r = if vs > 0.0 { vt * vs / vts * (ds / vs - dt / vt).powi(2) } else { f64::INFINITY };
        BoundaryCoeffs {
            b0,
            b_tilde,
            c0: b0 / (2.0 * PI * vt).sqrt(),
            c_tilde: b_tilde / (2.0 * PI * vts).sqrt(),
            r,
        }
    }

    /// Samples the problem on `n` steps of [0, t_max].
    pub fn tabulate(&self, t_max: f64, n: usize) -> Table {
        let h = t_max / n as f64;
        let mut table = Table::with_capacity(0.0, h, self.sigma, n);
        for i in 0..=n {
            let t = i as f64 * h;
            let inc = if i == 0 { 0.0 } else { (self.v)(t) - (self.v)(t - h) };
            table.push(0.0, (self.v)(t), (self.dv)(t), (self.d)(t), (self.dd)(t), inc);
        }
        table
    }
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &x| acc * t + x)
}

fn derivative_coeffs(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &x)| k as f64 * x).collect()
}

/// Scaled tabulation of a level-crossing problem on a uniform grid.
///
/// At node i: v = S²w, v′ = S²ω, d = Sδ, d′ = Sδ′ with S = e^{k}, and
/// `inc[i]` = (v(tᵢ) − v(tᵢ₋₁))/Sᵢ².
#[derive(Debug, Clone)]
pub struct Table {
    pub origin: f64,
    pub h: f64,
    pub sigma: f64,
    pub k: Vec<f64>,
    pub w: Vec<f64>,
    pub omega: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_prime: Vec<f64>,
    pub inc: Vec<f64>,
}

impl Table {
    fn with_capacity(origin: f64, h: f64, sigma: f64, n: usize) -> Self {
        let v = || Vec::with_capacity(n + 1);
        Self { origin, h, sigma, k: v(), w: v(), omega: v(), delta: v(), delta_prime: v(), inc: v() }
    }

    fn push(&mut self, k: f64, w: f64, omega: f64, delta: f64, delta_prime: f64, inc: f64) {
        self.k.push(k);
        self.w.push(w);
        self.omega.push(omega);
        self.delta.push(delta);
        self.delta_prime.push(delta_prime);
        self.inc.push(inc);
    }

    /// Number of steps.
    pub fn steps(&self) -> usize {
        self.w.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.h
    }

    /// d(t)²/v(t), the exponent of the leading factor.
    pub fn exponent(&self, i: usize) -> f64 {
        self.delta[i] * self.delta[i] / self.w[i]
    }

    pub fn c0(&self, i: usize) -> f64 {
        let (w, om) = (self.w[i], self.omega[i]);
        om * (self.delta[i] / w - self.delta_prime[i] / om) / (2.0 * PI * w).sqrt()
    }

    /// (d v′ − v d′)/(v′(1 + √v)).
    pub fn separation(&self, i: usize) -> f64 {
        let num = self.delta[i] * self.omega[i] - self.w[i] * self.delta_prime[i];
        num / (self.omega[i] * ((-self.k[i]).exp() + self.w[i].sqrt()))
    }

    /// (1 + v)/v′.
    pub fn growth(&self, i: usize) -> f64 {
        ((-2.0 * self.k[i]).exp() + self.w[i]) / self.omega[i]
    }

    /// (d v′ − v d′)/(1 + v^{3/2}).
    pub fn excess(&self, i: usize) -> f64 {
        let num = self.delta[i] * self.omega[i] - self.w[i] * self.delta_prime[i];
        num / ((-3.0 * self.k[i]).exp() + self.w[i].powf(1.5))
    }

    fn validate(&self) -> Result<(), VolterraError> {
        if self.steps() < 2 {
            return Err(VolterraError::Invalid("grid needs at least two steps".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(VolterraError::Invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.w[0] != 0.0 {
            return Err(VolterraError::Invalid(format!("v(0) must vanish, got {}", self.w[0])));
        }
        if !(self.delta[0] > 0.0) {
            return Err(VolterraError::Invalid(format!("d(0) must be positive, got {}", self.delta[0])));
        }
        if let Some(i) = self.omega.iter().position(|&o| !(o > 0.0)) {
            return Err(VolterraError::Invalid(format!("v' not positive at t={}", self.time(i))));
        }
        if let Some(i) = self.inc.iter().skip(1).position(|&x| !(x > 0.0)) {
            return Err(VolterraError::Invalid(format!("v not increasing at t={}", self.time(i + 1))));
        }
        Ok(())
    }
}

/// Kernel quantities of one row i of the discretised equation.
struct Row {
    /// c̃(tᵢ, tⱼ), j < i.
    c_tilde: Vec<f64>,
    /// r(tᵢ, tⱼ), j < i.
    r: Vec<f64>,
    /// v(tᵢ)/v(tᵢ,tⱼ), j < i.
    ratio: Vec<f64>,
    /// sup_j |b̃(tᵢ,tⱼ)|/√(2πv(tᵢ)).
    lemma_a1: f64,
}

/// Generates kernel rows in order, carrying W(i,j) = v(tᵢ,tⱼ)/Sᵢ² by the
/// recursion W(i,j) = inc[i] + (Sᵢ₋₁/Sᵢ)² W(i−1,j).
struct RowSweep<'a> {
    table: &'a Table,
    i: usize,
    wrow: Vec<f64>,
}

impl<'a> RowSweep<'a> {
    fn new(table: &'a Table) -> Self {
        Self { table, i: 0, wrow: Vec::with_capacity(table.steps() + 1) }
    }

    fn next_row(&mut self) -> Option<Row> {
        let tb = self.table;
        self.i += 1;
        let i = self.i;
        if i > tb.steps() {
            return None;
        }
        let shrink = (2.0 * (tb.k[i - 1] - tb.k[i])).exp();
        for w in self.wrow.iter_mut() {
            *w = tb.inc[i] + shrink * *w;
        }
        self.wrow.push(tb.inc[i]);
        let (wi, om, di, dpi, ki) = (tb.w[i], tb.omega[i], tb.delta[i], tb.delta_prime[i], tb.k[i]);
        let mut row = Row {
            c_tilde: vec![0.0; i],
            r: vec![f64::INFINITY; i],
            ratio: vec![0.0; i],
            lemma_a1: 0.0,
        };
        let mut sup_b = 0.0f64;
        for j in 1..i {
            let wij = self.wrow[j];
            let rho = (tb.k[j] - ki).exp();
            let dd = di - rho * tb.delta[j];
            let b = om * dd / wij - dpi;
            sup_b = sup_b.max(b.abs());
            row.c_tilde[j] = b / (2.0 * PI * wij).sqrt();
            row.r[j] = wi * tb.w[j] / wij * (tb.delta[j] / tb.w[j] - rho * di / wi).powi(2);
            row.ratio[j] = wi / wij;
        }
        // j = 0: v(0) = 0 gives r = ∞, so the start node never contributes.
        sup_b = sup_b.max((om * (di - (tb.k[0] - ki).exp() * tb.delta[0]) / wi - dpi).abs());
        row.lemma_a1 = sup_b / (2.0 * PI * wi).sqrt();
        Some(row)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VolterraSolution {
    pub times: Vec<f64>,
    pub psi: Vec<f64>,
    pub c: Vec<f64>,
    pub c0: Vec<f64>,
    /// A-priori half-width: |c − c₀| ≤ this.
    pub lemma_bound: Vec<f64>,
    pub sigma: f64,
}

impl VolterraSolution {
    /// Trapezoid mass of ψ over the grid.
    pub fn mass(&self) -> f64 {
        let h = self.times[1] - self.times[0];
        crate::numerics::trapezoid(&self.psi, h)
    }

    pub fn sup_abs(&self) -> f64 {
        self.psi.iter().fold(0.0, |m, p| m.max(p.abs()))
    }
}

fn psi_from_c(table: &Table, i: usize, c: f64) -> f64 {
    if i == 0 {
        return 0.0;
    }
    let s2 = table.sigma * table.sigma;
    c * (-table.exponent(i) / (2.0 * s2)).exp() / table.sigma
}

/// Product-trapezoid forward substitution of the second-kind equation.
pub fn solve_table(table: &Table) -> Result<VolterraSolution, VolterraError> {
    table.validate()?;
    let n = table.steps();
    let sigma = table.sigma;
    let two_s2 = 2.0 * sigma * sigma;
    let h = table.h;
    let mut c = vec![0.0; n + 1];
    let mut c0 = vec![0.0; n + 1];
    let mut lemma_bound = vec![0.0; n + 1];
    let mut sweep = RowSweep::new(table);
    while let Some(row) = sweep.next_row() {
        let i = sweep.i;
        let mut acc = 0.0;
        for j in 1..i {
            if row.c_tilde[j] != 0.0 {
                acc += row.c_tilde[j] * c[j] * (-row.r[j] / two_s2).exp();
            }
        }
        c0[i] = table.c0(i);
        c[i] = c0[i] - h * acc / sigma;
        lemma_bound[i] = row.lemma_a1;
    }
    let psi = (0..=n).map(|i| psi_from_c(table, i, c[i])).collect();
    Ok(VolterraSolution {
        times: (0..=n).map(|i| table.time(i)).collect(),
        psi,
        c,
        c0,
        lemma_bound,
        sigma,
    })
}

pub fn solve_second_kind(p: &FptProblem, t_max: f64, n: usize) -> Result<VolterraSolution, VolterraError> {
    solve_table(&p.tabulate(t_max, n))
}

/// Solves at `n` and `2n` steps and fails if the sup of ψ on the common
/// nodes moves by more than `tol` relative to its size.
pub fn solve_checked(p: &FptProblem, t_max: f64, n: usize, tol: f64) -> Result<VolterraSolution, VolterraError> {
    let coarse = solve_second_kind(p, t_max, n)?;
    let fine = solve_second_kind(p, t_max, 2 * n)?;
    let change = coarse.psi.iter().zip(fine.psi.iter().step_by(2)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = fine.sup_abs().max(f64::MIN_POSITIVE);
    if change > tol * scale {
        return Err(VolterraError::GridTooCoarse { change: change / scale, tol });
    }
    Ok(fine)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// |1 − ∫F(t|s)ψ(s)ds / F(t)| per node (NaN at t = 0).
    pub relative: Vec<f64>,
    /// |F(t) − ∫F(t|s)ψ(s)ds| per node, in units of ψ·S(t).
    pub absolute: Vec<f64>,
    pub sup_relative: f64,
}

/// Residual of the first-kind identity F(t) = ∫₀ᵗ F(t|s)ψ(s) ds.
///
/// With u = √(t−s) the (t−s)^{−1/2} factor of F(t|s) cancels against
/// ds = −2u du. Each grid cell is integrated by Gauss–Legendre in u, with
/// the remaining smooth factor interpolated log-linearly between nodes
/// (linearly where it changes sign).
pub fn check_first_kind(table: &Table, sol: &VolterraSolution, from: f64) -> ResidualReport {
    let n = table.steps();
    let h = table.h;
    let sigma = table.sigma;
    let two_s2 = 2.0 * sigma * sigma;
    let rule = &*GL8;
    let mut relative = vec![f64::NAN; n + 1];
    let mut absolute = vec![f64::NAN; n + 1];
    let mut sup = 0.0f64;
    let mut sweep = RowSweep::new(table);
    let mut g = Vec::with_capacity(n + 1);
    while let Some(row) = sweep.next_row() {
        let i = sweep.i;
        // g(s) = √((t−s) v(t)/v(t,s)) e^{−r/2σ²} c(s); at s = t it is √(v/v′)·c.
        g.clear();
        g.push(0.0);
        for j in 1..i {
            let tau = (i - j) as f64 * h;
            g.push((tau * row.ratio[j]).sqrt() * (-row.r[j] / two_s2).exp() * sol.c[j]);
        }
        g.push((table.w[i] / table.omega[i]).sqrt() * sol.c[i]);
        let mut integral = 0.0;
        for j in 0..i {
            if g[j] == 0.0 && g[j + 1] == 0.0 {
                continue;
            }
            let ua = ((i - j) as f64 * h).sqrt();
            let ub = ((i - j - 1) as f64 * h).sqrt();
            // Three-node stencil m, m+1, m+2 covering the cell.
            let m = if i >= 2 { j.min(i - 2) } else { j };
            let quadratic = i >= 2 && g[m] > 0.0 && g[m + 1] > 0.0 && g[m + 2] > 0.0;
            let linear_log = g[j] > 0.0 && g[j + 1] > 0.0;
            let l: [f64; 3] = if quadratic { [g[m].ln(), g[m + 1].ln(), g[m + 2].ln()] } else { [0.0; 3] };
            let (ga, gb) = (g[j], g[j + 1]);
            let (la, lb) = if linear_log { (ga.ln(), gb.ln()) } else { (0.0, 0.0) };
            let cell = rule.composite(
                |u| {
                    // Position in grid units from tⱼ.
                    let x = ((i - j) as f64 * h - u * u) / h;
                    2.0 * if quadratic {
                        let y = x + (j - m) as f64;
                        let lg = l[0] * (y - 1.0) * (y - 2.0) / 2.0 - l[1] * y * (y - 2.0) + l[2] * y * (y - 1.0) / 2.0;
                        lg.exp()
                    } else if linear_log {
                        (la + x * (lb - la)).exp()
                    } else {
                        ga + x * (gb - ga)
                    }
                },
                ub,
                ua,
                1,
            );
            integral += cell;
        }
        let rel = (1.0 - integral / sigma).abs();
        relative[i] = rel;
        let f = (-table.exponent(i) / two_s2).exp() / (sigma * (2.0 * PI * table.w[i]).sqrt());
        absolute[i] = rel * f;
        if table.time(i) >= from {
            sup = sup.max(rel);
        }
    }
    ResidualReport { relative, absolute, sup_relative: sup }
}

/// Constants of the contraction lemma and its corollary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaConstants {
    pub delta: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

/// Grid estimates: Δ = min separation, M₁ = sup|c̃|, M₂ = sup growth,
/// M₃ = sup excess.
pub fn estimate_constants(table: &Table) -> LemmaConstants {
    let n = table.steps();
    let mut sweep = RowSweep::new(table);
    let mut m1 = 0.0f64;
    while let Some(row) = sweep.next_row() {
        m1 = row.c_tilde.iter().fold(m1, |m, c| m.max(c.abs()));
    }
    let (mut delta, mut m2, mut m3) = (f64::INFINITY, 0.0f64, 0.0f64);
    for i in 1..=n {
        delta = delta.min(table.separation(i));
        m2 = m2.max(table.growth(i));
        m3 = m3.max(table.excess(i));
    }
    LemmaConstants { delta, m1, m2, m3 }
}

/// ε(t) = 2M₁(e^{−Δ²/4σ²} t/σ + 4M₂σ/Δ²).
pub fn contraction_epsilon(k: &LemmaConstants, sigma: f64, t: f64) -> f64 {
    2.0 * k.m1 * ((-k.delta * k.delta / (4.0 * sigma * sigma)).exp() * t / sigma + 4.0 * k.m2 * sigma / (k.delta * k.delta))
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPoint {
    pub c: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub constants: LemmaConstants,
    pub epsilon: Vec<f64>,
    /// Corollary bracket c₀[1 ∓ ε/(1−ε)·M₂M₃/Δ]; NaN where ε ≥ 1.
    pub bracket_lo: Vec<f64>,
    pub bracket_hi: Vec<f64>,
    /// True when ε ≥ 1 somewhere, so contraction is not guaranteed there.
    pub warning: bool,
}

/// Sup-norm change below which Picard iteration stops.
pub const PICARD_TOL: f64 = 1e-12;

/// Picard iteration c ← 𝒯c started from c₀, on the same discretisation as
/// [`solve_table`].
pub fn fixed_point_prefactor(
    table: &Table,
    constants: Option<LemmaConstants>,
    iters: usize,
) -> Result<FixedPoint, VolterraError> {
    table.validate()?;
    let n = table.steps();
    let sigma = table.sigma;
    let two_s2 = 2.0 * sigma * sigma;
    let h = table.h;
    // Kernel weights stored once: κᵢⱼ = h c̃ᵢⱼ e^{−rᵢⱼ/2σ²}/σ.
    let mut kernel: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    kernel.push(Vec::new());
    let mut sweep = RowSweep::new(table);
    while let Some(row) = sweep.next_row() {
        let kr = (0..row.c_tilde.len())
            .map(|j| if j == 0 { 0.0 } else { h * row.c_tilde[j] * (-row.r[j] / two_s2).exp() / sigma })
            .collect();
        kernel.push(kr);
    }
    let c0: Vec<f64> = (0..=n).map(|i| if i == 0 { 0.0 } else { table.c0(i) }).collect();
    let mut c = c0.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < iters {
        iterations += 1;
        let next: Vec<f64> = (0..=n)
            .map(|i| if i == 0 { 0.0 } else { c0[i] - kernel[i].iter().zip(&c).map(|(k, c)| k * c).sum::<f64>() })
            .collect();
        let change = next.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = next.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        c = next;
        if change <= PICARD_TOL * scale {
            converged = true;
            break;
        }
    }
    let constants = constants.unwrap_or_else(|| estimate_constants(table));
    let epsilon: Vec<f64> = (0..=n).map(|i| contraction_epsilon(&constants, sigma, i as f64 * h)).collect();
    let factor = constants.m2 * constants.m3 / constants.delta;
    let mut bracket_lo = vec![f64::NAN; n + 1];
    let mut bracket_hi = vec![f64::NAN; n + 1];
    for i in 1..=n {
        let e = epsilon[i];
        if e < 1.0 && constants.delta > 0.0 {
            let q = e / (1.0 - e) * factor;
            bracket_lo[i] = c0[i] * (1.0 - q);
            bracket_hi[i] = c0[i] * (1.0 + q);
        }
    }
    let warning = epsilon.iter().any(|&e| !(e < 1.0)) || constants.delta <= 0.0;
    Ok(FixedPoint { c, iterations, converged, constants, epsilon, bracket_lo, bracket_hi, warning })
}

/// Which linear leg of the model a tabulation describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelLeg {
    /// y⁻ from (start, −1) to 1−δ₁.
    Minus,
    /// y⁻ from (start, 1−δ₂) to 1−δ₁.
    Up,
    /// y⁺ from (start, 1−δ₁) down to 1−δ₂, not killed at +1.
    Down,
}

/// Single-panel 16-point Gauss–Legendre over one grid step.
fn step_integral<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    GL16.composite(f, a, b, 1)
}

/// Tabulates one leg of the switching model from `start` over `n` steps
/// of width `h`.
pub fn model_table(spec: &ModelSpec, leg: ModelLeg, start: f64, h: f64, n: usize) -> Table {
    let mut table = Table::with_capacity(start, h, spec.sigma, n);
    let a0 = spec.alpha(start);
    let (d1, d2) = (spec.delta1, spec.delta2);
    let mut w = 0.0;
    for i in 0..=n {
        let u = start + i as f64 * h;
        let au = spec.alpha(u);
        let k_rel = au - a0;
        let g2 = spec.g_sq(u);
        let a = spec.a.eval(u);
        match leg {
            ModelLeg::Minus | ModelLeg::Up => {
                // z = e^{α(u,start)}(y + 1) − y₀-offset; S = e^{α(u,start)}.
                let inc = if i == 0 {
                    0.0
                } else {
                    step_integral(|s| (-2.0 * (au - spec.alpha(s))).exp() * spec.g_sq(s), u - h, u)
                };
                if i > 0 {
                    w = (-2.0 * spec.alpha2(u, u - h)).exp() * w + inc;
                }
                let lower = if leg == ModelLeg::Minus { 0.0 } else { 2.0 - d2 };
                table.push(k_rel, w, g2, (2.0 - d1) - lower * (-k_rel).exp(), a * (2.0 - d1), inc);
            }
            ModelLeg::Down => {
                let inc = if i == 0 {
                    0.0
                } else {
                    step_integral(|s| (-2.0 * (spec.alpha(s) - a0)).exp() * spec.g_sq(s), u - h, u)
                };
                w += inc;
                let e = (-k_rel).exp();
                table.push(0.0, w, e * e * g2, d2 * e - d1, -a * d2 * e, inc);
            }
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_density_values() {
        let p = FptProblem::constant_boundary(1.0, 1.0);
        let peak = p.transition_density(2.0, 0.3, 1.0, 0.3).unwrap();
        assert!((peak - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        let a = p.transition_density(2.0, 1.3, 1.0, 0.3).unwrap();
        let b = p.transition_density(2.0, -0.7, 1.0, 0.3).unwrap();
        assert!((a - b).abs() < 1e-16);
        assert!((a - 0.241_970_724_519_143_37).abs() < 1e-15);
        assert!(p.transition_density(1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn boundary_coefficients() {
        let p = FptProblem::constant_boundary(0.8, 1.0);
        let bc = p.boundary_coeffs(2.0, 1.0);
        assert!((bc.b0 - 0.4).abs() < 1e-15);
        assert_eq!(bc.b_tilde, 0.0);
        let near = p.boundary_coeffs(2.0, 2.0 - 1e-9);
        assert!(near.r < 1e-8);
        let line = FptProblem::polynomial(vec![0.0, 1.0], vec![1.0, 1.0], 1.0);
        for &s in &[0.1, 0.5, 1.9] {
            assert!(line.boundary_coeffs(2.0, s).b_tilde.abs() < 1e-15);
        }
    }

    #[test]
    fn constant_boundary_matches_closed_form() {
        let p = FptProblem::constant_boundary(1.0, 1.0);
        let sol = solve_second_kind(&p, 5.0, 2000).unwrap();
        let mut worst = 0.0f64;
        for (t, psi) in sol.times.iter().zip(&sol.psi) {
            if *t >= 0.05 {
                let exact = t.powf(-1.5) * (-0.5 / t).exp() / (2.0 * PI).sqrt();
                worst = worst.max((psi / exact - 1.0).abs());
            }
        }
        assert!(worst <= 1e-3, "{worst:e}");
        let i = sol.times.iter().position(|&t| (t - 1.0).abs() < 1e-12).unwrap();
        assert!((sol.psi[i] - 0.241_970_724_519_143_37).abs() < 1e-12);
    }

    #[test]
    fn straight_line_boundary_has_no_integral_term() {
        let p = FptProblem::polynomial(vec![0.0, 1.0], vec![1.0, 1.0], 0.7);
        let table = p.tabulate(3.0, 300);
        let sol = solve_table(&table).unwrap();
        for i in 1..=300 {
            assert!((sol.c[i] - sol.c0[i]).abs() <= 1e-12 * sol.c0[i].abs());
        }
        let fp = fixed_point_prefactor(&table, None, 10).unwrap();
        assert!(fp.converged);
        assert_eq!(fp.iterations, 1);
    }

    #[test]
    fn halving_check() {
        let p = FptProblem::constant_boundary(1.0, 1.0);
        let coarse = solve_second_kind(&p, 5.0, 2000).unwrap();
        let fine = solve_second_kind(&p, 5.0, 4000).unwrap();
        let change = coarse.psi.iter().zip(fine.psi.iter().step_by(2)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change <= 1e-4 * fine.sup_abs());
        assert!(solve_checked(&p, 5.0, 1000, 1e-4).is_ok());
    }

    #[test]
    fn first_kind_residual() {
        let p = FptProblem::constant_boundary(1.0, 1.0);
        let table = p.tabulate(5.0, 2000);
        let sol = solve_table(&table).unwrap();
        let rep = check_first_kind(&table, &sol, 0.05);
        assert!(rep.sup_relative <= 1e-3, "{:e}", rep.sup_relative);

        let zero = VolterraSolution { psi: vec![0.0; 2001], c: vec![0.0; 2001], ..sol.clone() };
        let rep0 = check_first_kind(&table, &zero, 0.05);
        let i = 400;
        let f = (-0.5 / table.time(i)).exp() / (2.0 * PI * table.time(i)).sqrt();
        assert!((rep0.relative[i] - 1.0).abs() < 1e-15);
        assert!((rep0.absolute[i] - f).abs() < 1e-15);

        let table2 = p.tabulate(5.0, 1000);
        let rep2 = check_first_kind(&table2, &solve_table(&table2).unwrap(), 0.05);
        assert!(rep.sup_relative < rep2.sup_relative);
    }

    #[test]
    fn epsilon_arithmetic() {
        let k = LemmaConstants { delta: 1.0, m1: 1.0, m2: 1.0, m3: 1.0 };
        let e = contraction_epsilon(&k, 0.1, 1.0);
        let expected = 2.0 * (10.0 * (-25f64).exp() + 0.4);
        assert!((e - expected).abs() < 1e-15);
    }
}
