//! Monte Carlo simulation of the switching process with exact Gaussian
//! steps on each linear branch.
//!
//! Every path owns the ChaCha8 stream `path_id` under the run seed and
//! consumes exactly three words per substep (two for the Gaussian, one for
//! the bridge test), so substep `k` of path `p` always sees the same draws
//! whatever the schedule.

use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::ModelSpec;
use crate::density::{DensityGrid, Provenance};
use crate::exec::{self, Mode};
use crate::numerics::GL16;
use crate::variances::RateReport;

/// Largest λh accepted without a warning.
pub const MAX_LAMBDA_H: f64 = 0.05;
/// 97.5% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub substeps_per_period: usize,
    pub n_paths: usize,
    pub t_max_periods: usize,
    pub seed: u64,
    /// Sharpen +1 crossings with the exact bridge probability.
    pub bridge_correction: bool,
    /// Apply the bridge test to the switching levels too.
    pub bridge_switching: bool,
    pub mode: Mode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            substeps_per_period: 64,
            n_paths: 10_000,
            t_max_periods: 40,
            seed: 1,
            bridge_correction: true,
            bridge_switching: false,
            mode: Mode::default(),
        }
    }
}

impl SimConfig {
    pub fn substep(&self, spec: &ModelSpec) -> f64 {
        spec.period() / self.substeps_per_period as f64
    }

    pub fn t_max(&self, spec: &ModelSpec) -> f64 {
        self.t_max_periods as f64 * spec.period()
    }

    pub fn warnings(&self, spec: &ModelSpec) -> Vec<String> {
        let lh = spec.lambda() * self.substep(spec);
        let mut out = Vec::new();
        if lh > MAX_LAMBDA_H {
            out.push(format!("substep too coarse: lambda*h = {lh:.4} > {MAX_LAMBDA_H}"));
        }
        out
    }
}

/// Horizon in periods that lets roughly 10% of paths leave, from the
/// per-period mass σC₀e^{−R²/2σ²}/2 of the metastable law.
pub fn suggest_t_max_periods(spec: &ModelSpec, rate: &RateReport) -> usize {
    let sig = spec.sigma;
    let per_period = 0.5 * sig * rate.c0 * (-rate.r_sq() / (2.0 * sig * sig)).exp();
    let relax = (2.0 * spec.log_sigma_abs() / rate.lambda_t()).ceil();
    let needed = relax + (-(0.9f64).ln() / per_period.max(1e-300)).ceil();
    needed.clamp(1.0, 1e7) as usize
}

/// Expected fraction leaving before the horizon under the same estimate.
pub fn expected_uncensored(spec: &ModelSpec, rate: &RateReport, periods: usize) -> f64 {
    let sig = spec.sigma;
    let per_period = 0.5 * sig * rate.c0 * (-rate.r_sq() / (2.0 * sig * sig)).exp();
    let relax = (2.0 * spec.log_sigma_abs() / rate.lambda_t()).ceil();
    let active = (periods as f64 - relax).max(0.0);
    1.0 - (-per_period * active).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Minus,
    Plus,
}

/// Per-substep transition data over one period.
#[derive(Debug, Clone)]
pub struct StepTables {
    pub h: f64,
    /// e^{−α(t+h,t)}.
    pub decay: Vec<f64>,
    /// ∫ e^{−2α(t+h,u)}g² du.
    pub var_minus: Vec<f64>,
    /// e^{α(t+h,t)}.
    pub growth: Vec<f64>,
    /// ∫ e^{2α(t+h,u)}g² du.
    pub var_plus: Vec<f64>,
}

impl StepTables {
    pub fn new(spec: &ModelSpec, substeps: usize) -> Self {
        let h = spec.period() / substeps as f64;
        let mut tables = Self {
            h,
            decay: Vec::with_capacity(substeps),
            var_minus: Vec::with_capacity(substeps),
            growth: Vec::with_capacity(substeps),
            var_plus: Vec::with_capacity(substeps),
        };
        for i in 0..substeps {
            let t0 = i as f64 * h;
            let t1 = t0 + h;
            let a = spec.alpha2(t1, t0);
            tables.decay.push((-a).exp());
            tables.growth.push(a.exp());
            tables.var_minus.push(GL16.composite(|u| (-2.0 * spec.alpha2(t1, u)).exp() * spec.g_sq(u), t0, t1, 1));
            tables.var_plus.push(GL16.composite(|u| (2.0 * spec.alpha2(t1, u)).exp() * spec.g_sq(u), t0, t1, 1));
        }
        tables
    }

    pub fn len(&self) -> usize {
        self.decay.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decay.is_empty()
    }

    /// Mean and variance (for unit σ) of y at the end of substep k.
    pub fn moments(&self, branch: Branch, k: usize, y: f64) -> (f64, f64) {
        let i = k % self.len();
        match branch {
            Branch::Minus => (-1.0 + (y + 1.0) * self.decay[i], self.var_minus[i]),
            Branch::Plus => (1.0 + (y - 1.0) * self.growth[i], self.var_plus[i]),
        }
    }
}

/// One exact step: y(t+h) given y(t) on `branch`, with t the start of
/// substep `k` and `z` a standard normal.
pub fn step_exact(tables: &StepTables, sigma: f64, branch: Branch, k: usize, y: f64, z: f64) -> f64 {
    let (mean, var) = tables.moments(branch, k, y);
    mean + sigma * var.sqrt() * z
}

/// Probability that the pinned process touched `level` inside substep `k`
/// when both ends lie on the same side. For either branch the distance to
/// its own fixed point, rescaled by e^{∓α}, is a time-changed Brownian
/// motion, which makes the formula exact for levels ±1 and a close
/// approximation otherwise.
pub fn bridge_probability(tables: &StepTables, sigma: f64, branch: Branch, k: usize, y0: f64, y1: f64, level: f64) -> f64 {
    let (_, var) = tables.moments(branch, k, y0);
    let i = k % tables.len();
    let gain = match branch {
        Branch::Minus => tables.decay[i],
        Branch::Plus => tables.growth[i],
    };
    let d0 = level - y0;
    let d1 = level - y1;
    if d0 * d1 <= 0.0 {
        return 1.0;
    }
    (-2.0 * d0 * d1 * gain / (sigma * sigma * var)).exp()
}

fn unit(x: u64) -> f64 {
    // (0, 1]
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct Draws {
    rng: ChaCha8Rng,
}

impl Draws {
    fn new(seed: u64, path_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_id);
        Self { rng }
    }

    /// Gaussian and bridge uniform for one substep.
    fn substep(&mut self) -> (f64, f64) {
        let u1 = unit(self.rng.next_u64());
        let u2 = unit(self.rng.next_u64());
        let u3 = unit(self.rng.next_u64());
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
        (z, u3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathOutcome {
    /// None when censored at the horizon.
    pub tau_plus: Option<f64>,
    pub n_switches: u32,
    /// τ₁, the first crossing of 1−δ₁ from −1.
    pub first_up_time: Option<f64>,
}

/// Precomputed, read-only simulation state shared by all workers.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub spec: ModelSpec,
    pub cfg: SimConfig,
    pub tables: StepTables,
}

impl Simulator {
    pub fn new(spec: &ModelSpec, cfg: &SimConfig) -> Self {
        assert!(cfg.substeps_per_period > 0, "substeps_per_period must be positive");
        Self { spec: spec.clone(), cfg: *cfg, tables: StepTables::new(spec, cfg.substeps_per_period) }
    }

    fn n_steps(&self) -> usize {
        self.cfg.t_max_periods * self.cfg.substeps_per_period
    }

    fn mid(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.tables.h
    }

    /// One path of the switching process from (0, −1). Crossing times are
    /// reported at the midpoint of the substep in which they occur.
    pub fn simulate_path(&self, path_id: u64) -> PathOutcome {
        let sig = self.spec.sigma;
        let up = 1.0 - self.spec.delta1;
        let down = 1.0 - self.spec.delta2;
        let mut draws = Draws::new(self.cfg.seed, path_id);
        let mut y = -1.0;
        let mut branch = Branch::Minus;
        let mut out = PathOutcome { tau_plus: None, n_switches: 0, first_up_time: None };
        for k in 0..self.n_steps() {
            let (z, u) = draws.substep();
            let y1 = step_exact(&self.tables, sig, branch, k, y, z);
            let mut hit = y1 > 1.0;
            if !hit && branch == Branch::Plus && self.cfg.bridge_correction {
                hit = u < bridge_probability(&self.tables, sig, branch, k, y, y1, 1.0);
            }
            if hit {
                out.tau_plus = Some(self.mid(k));
                if out.first_up_time.is_none() {
                    out.first_up_time = out.tau_plus;
                }
                return out;
            }
            match branch {
                Branch::Minus => {
                    let mut cross = y1 > up;
                    if !cross && self.cfg.bridge_switching {
                        cross = u < bridge_probability(&self.tables, sig, branch, k, y, y1, up);
                    }
                    if cross {
                        branch = Branch::Plus;
                        out.n_switches += 1;
                        out.first_up_time.get_or_insert(self.mid(k));
                    }
                }
                Branch::Plus => {
                    let mut cross = y1 < down;
                    if !cross && self.cfg.bridge_switching {
                        cross = u < bridge_probability(&self.tables, sig, branch, k, y, y1, down);
                    }
                    if cross {
                        branch = Branch::Minus;
                        out.n_switches += 1;
                    }
                }
            }
            y = y1;
        }
        out
    }

    pub fn simulate(&self) -> Vec<PathOutcome> {
        exec::map_indices(self.cfg.mode, self.cfg.n_paths, |i| self.simulate_path(i as u64))
    }

    /// y⁺ alone from (start_step·h, 1−δ₁) with no switching; returns the
    /// index of the substep in which +1 was first crossed.
    pub fn plus_leg_crossing(&self, start_step: usize, path_id: u64) -> Option<usize> {
        let sig = self.spec.sigma;
        let mut draws = Draws::new(self.cfg.seed, path_id);
        let mut y = 1.0 - self.spec.delta1;
        for k in start_step..start_step + self.n_steps() {
            let (z, u) = draws.substep();
            let y1 = step_exact(&self.tables, sig, Branch::Plus, k, y, z);
            let mut hit = y1 > 1.0;
            if !hit && self.cfg.bridge_correction {
                hit = u < bridge_probability(&self.tables, sig, Branch::Plus, k, y, y1, 1.0);
            }
            if hit {
                return Some(k);
            }
            y = y1;
        }
        None
    }

    pub fn plus_leg_crossings(&self, start_step: usize) -> Vec<Option<usize>> {
        exec::map_indices(self.cfg.mode, self.cfg.n_paths, |i| self.plus_leg_crossing(start_step, i as u64))
    }
}

pub fn simulate(spec: &ModelSpec, cfg: &SimConfig) -> Vec<PathOutcome> {
    Simulator::new(spec, cfg).simulate()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Lower edges of the bins.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_paths: usize,
    pub censored: usize,
}

impl Histogram {
    /// Integer counts of `times` in bins [k·w, (k+1)·w) up to `t_max`.
    pub fn from_times<I: IntoIterator<Item = Option<f64>>>(times: I, n_paths: usize, bin_width: f64, t_max: f64) -> Self {
        let n_bins = (t_max / bin_width).ceil() as usize;
        let mut counts = vec![0u64; n_bins];
        let mut seen = 0;
        for t in times.into_iter().flatten() {
            let b = ((t / bin_width).floor() as usize).min(n_bins.saturating_sub(1));
            counts[b] += 1;
            seen += 1;
        }
        Self {
            bin_width,
            edges: (0..n_bins).map(|k| k as f64 * bin_width).collect(),
            counts,
            n_paths,
            censored: n_paths - seen,
        }
    }

    pub fn censor_rate(&self) -> f64 {
        self.censored as f64 / self.n_paths as f64
    }

    /// Density per bin with 95% normal-approximation bands; empty when
    /// nothing was observed.
    pub fn density(&self, meta: Provenance) -> DensityGrid {
        if self.censored == self.n_paths {
            return DensityGrid::new(Vec::new(), Vec::new(), meta);
        }
        let n = self.n_paths as f64;
        let w = self.bin_width;
        let mut times = Vec::with_capacity(self.counts.len());
        let mut values = Vec::with_capacity(self.counts.len());
        let mut lo = Vec::with_capacity(self.counts.len());
        let mut hi = Vec::with_capacity(self.counts.len());
        for (k, &c) in self.counts.iter().enumerate() {
            let p = c as f64 / n;
            let half = Z_95 * (p * (1.0 - p) / n).sqrt();
            times.push(self.edges[k] + 0.5 * w);
            values.push(p / w);
            lo.push((p - half).max(0.0) / w);
            hi.push((p + half) / w);
        }
        DensityGrid::new(times, values, meta).with_band(lo, hi)
    }
}

/// Histogram of τ₊.
pub fn histogram_tau_plus(outcomes: &[PathOutcome], bin_width: f64, t_max: f64) -> Histogram {
    Histogram::from_times(outcomes.iter().map(|o| o.tau_plus), outcomes.len(), bin_width, t_max)
}

/// Empirical p₊ with bins of width `bin_width` (T/8 by default).
pub fn estimate_density(outcomes: &[PathOutcome], bin_width: f64, t_max: f64) -> DensityGrid {
    histogram_tau_plus(outcomes, bin_width, t_max).density(Provenance::McHistogram)
}

/// Empirical ψ₋ from the first up-crossing times.
pub fn estimate_psi_minus(outcomes: &[PathOutcome], bin_width: f64, t_max: f64) -> DensityGrid {
    Histogram::from_times(outcomes.iter().map(|o| o.first_up_time), outcomes.len(), bin_width, t_max)
        .density(Provenance::McHistogram)
}

/// sup over substep ends of |F_emp − F| for the plus leg started at
/// substep `start_step`, with `cdf(t)` the exact law.
pub fn plus_leg_ks<F: Fn(f64) -> f64>(sim: &Simulator, start_step: usize, cdf: F) -> f64 {
    let n = sim.cfg.n_paths;
    let steps = sim.n_steps();
    let mut counts = vec![0u64; steps];
    for k in sim.plus_leg_crossings(start_step).into_iter().flatten() {
        counts[k - start_step] += 1;
    }
    let h = sim.tables.h;
    let mut cum = 0u64;
    let mut worst: f64 = 0.0;
    for (j, c) in counts.iter().enumerate() {
        cum += c;
        let t = (start_step + j + 1) as f64 * h;
        worst = worst.max((cum as f64 / n as f64 - cdf(t)).abs());
    }
    worst
}

/// Kolmogorov–Smirnov style margin 3√(ln(2/α)/2n).
pub fn ks_margin(n: usize, alpha: f64) -> f64 {
    3.0 * ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::PeriodicFunction;

    fn constant(sigma: f64) -> ModelSpec {
        let one = PeriodicFunction::constant(1.0, 1.0).unwrap();
        ModelSpec::new(one.clone(), one, 0.1, 0.3, sigma).unwrap()
    }

    #[test]
    fn constant_tables() {
        let spec = constant(0.5);
        let t = StepTables::new(&spec, 10);
        assert!((t.var_minus[3] - (1.0 - (-0.2f64).exp()) / 2.0).abs() < 1e-15);
        assert!((t.var_plus[3] - ((0.2f64).exp() - 1.0) / 2.0).abs() < 1e-15);
        assert!((t.decay[0] - (-0.1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_flow() {
        let spec = constant(0.5);
        let t = StepTables::new(&spec, 10);
        assert_eq!(step_exact(&t, 0.0, Branch::Minus, 0, -1.0, 2.0), -1.0);
        let y = step_exact(&t, 0.0, Branch::Minus, 0, 0.0, 2.0);
        assert!((y - (-1.0 + (-0.1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn bridge_probability_limits() {
        let t = StepTables::new(&constant(0.5), 10);
        assert_eq!(bridge_probability(&t, 0.5, Branch::Plus, 0, 0.9, 1.1, 1.0), 1.0);
        let p = bridge_probability(&t, 0.5, Branch::Plus, 0, 0.9, 0.95, 1.0);
        assert!(p > 0.0 && p < 1.0);
        assert!(bridge_probability(&t, 0.5, Branch::Plus, 0, 0.0, 0.0, 1.0) < 1e-10);
    }

    #[test]
    fn tiny_noise_is_censored() {
        let spec = constant(1e-3);
        let cfg = SimConfig { n_paths: 20, t_max_periods: 5, ..SimConfig::default() };
        assert!(simulate(&spec, &cfg).iter().all(|o| o.tau_plus.is_none() && o.first_up_time.is_none()));
    }

    #[test]
    fn deterministic_across_modes() {
        let spec = constant(0.6);
        let cfg = SimConfig { n_paths: 200, t_max_periods: 10, mode: Mode::Sequential, ..SimConfig::default() };
        let a = simulate(&spec, &cfg);
        let b = simulate(&spec, &SimConfig { mode: Mode::Parallel, ..cfg });
        assert_eq!(a, b);
        let sim = Simulator::new(&spec, &cfg);
        assert_eq!(sim.simulate_path(17), a[17]);
        for o in &a {
            if let (Some(up), Some(tau)) = (o.first_up_time, o.tau_plus) {
                assert!(up <= tau);
            }
        }
    }

    #[test]
    fn histogram_edge_cases() {
        let censored = vec![PathOutcome { tau_plus: None, n_switches: 0, first_up_time: None }; 5];
        let h = histogram_tau_plus(&censored, 0.125, 1.0);
        assert_eq!(h.censor_rate(), 1.0);
        assert!(h.density(Provenance::McHistogram).is_empty());

        let mut outcomes = censored;
        outcomes[2].tau_plus = Some(0.3);
        let g = estimate_density(&outcomes, 0.125, 1.0);
        let nonzero: Vec<_> = g.values.iter().filter(|&&v| v > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0] - 1.0 / (5.0 * 0.125)).abs() < 1e-12);
        assert_eq!(g.argmax().unwrap().0, 2);
    }

    #[test]
    fn bridge_only_adds_crossings() {
        let spec = constant(0.5);
        let cfg = SimConfig { n_paths: 300, t_max_periods: 4, bridge_correction: false, ..SimConfig::default() };
        let sim_off = Simulator::new(&spec, &cfg);
        let sim_on = Simulator::new(&spec, &SimConfig { bridge_correction: true, ..cfg });
        for p in 0..300 {
            if let Some(k_off) = sim_off.plus_leg_crossing(0, p) {
                let k_on = sim_on.plus_leg_crossing(0, p).unwrap();
                assert!(k_on <= k_off);
            }
        }
    }
}
