//! Quadrature and one-dimensional search shared by the analytic modules.

use std::sync::LazyLock;

/// Points per Gauss–Legendre panel.
pub const GL_ORDER: usize = 16;
/// Relative agreement required between successive panel doublings.
pub const QUAD_REL_TOL: f64 = 1e-12;
/// Largest panel count tried before giving up.
pub const QUAD_MAX_PANELS: usize = 1 << 14;

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Fixed composite rule over `panels` equal panels of [a, b].
    pub fn composite<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64, panels: usize) -> f64 {
        let width = (b - a) / panels as f64;
        let half = 0.5 * width;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            let mut acc = 0.0;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc += w * f(mid + half * x);
            }
            total += acc * half;
        }
        total
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub static GL16: LazyLock<GaussLegendre> = LazyLock::new(|| GaussLegendre::new(GL_ORDER));

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub panels: usize,
    pub converged: bool,
}

/// Composite 16-point Gauss–Legendre, doubling the panel count until two
/// successive values agree to `QUAD_REL_TOL`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, panels: 0, converged: true };
    }
    let rule = &*GL16;
    let mut panels = 1;
    let mut prev = rule.composite(&mut f, a, b, panels);
    while panels < QUAD_MAX_PANELS {
        panels *= 2;
        let next = rule.composite(&mut f, a, b, panels);
        let scale = next.abs().max(f64::MIN_POSITIVE);
        if (next - prev).abs() <= QUAD_REL_TOL * scale {
            return Quadrature { value: next, panels, converged: true };
        }
        prev = next;
    }
    Quadrature { value: prev, panels, converged: false }
}

/// Golden-section minimisation of a unimodal function on [lo, hi].
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo).abs() > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 { (x1, f1) } else { (x2, f2) }
}

/// Samples of a periodic function on `n` equally spaced points of [0, period).
#[derive(Debug, Clone)]
pub struct PeriodicSamples {
    pub period: f64,
    pub values: Vec<f64>,
}

impl PeriodicSamples {
    pub fn new<F: FnMut(f64) -> f64>(mut f: F, period: f64, n: usize) -> Self {
        let values = (0..n).map(|i| f(period * i as f64 / n as f64)).collect();
        Self { period, values }
    }

    pub fn step(&self) -> f64 {
        self.period / self.values.len() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.step() * i as f64
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn min(&self) -> f64 {
        self.values[self.argmin()]
    }

    pub fn max(&self) -> f64 {
        self.values[self.argmax()]
    }

    /// True when the sampled oscillation is below `rel` of the magnitude.
    pub fn is_flat(&self, rel: f64) -> bool {
        let (lo, hi) = (self.min(), self.max());
        hi - lo <= rel * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)
    }

    /// Indices of cyclic local minima (strict on the left, weak on the right).
    pub fn local_minima(&self) -> Vec<usize> {
        let n = self.values.len();
        (0..n)
            .filter(|&i| {
                let prev = self.values[(i + n - 1) % n];
                let next = self.values[(i + 1) % n];
                self.values[i] < prev && self.values[i] <= next
            })
            .collect()
    }

    /// Indices of cyclic local maxima.
    pub fn local_maxima(&self) -> Vec<usize> {
        let n = self.values.len();
        (0..n)
            .filter(|&i| {
                let prev = self.values[(i + n - 1) % n];
                let next = self.values[(i + 1) % n];
                self.values[i] > prev && self.values[i] >= next
            })
            .collect()
    }
}

/// Refines a grid minimum of `f` at index `i` of `samples` by golden section
/// over the two neighbouring cells.
pub fn refine_min<F: FnMut(f64) -> f64>(f: F, samples: &PeriodicSamples, i: usize, tol: f64) -> (f64, f64) {
    let h = samples.step();
    let t = samples.time(i);
    golden_section(f, t - h, t + h, tol)
}

/// Central second difference with one Richardson step.
pub fn second_derivative<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let f0 = f(x);
    let d = |f: &mut F, h: f64| (f(x + h) - 2.0 * f0 + f(x - h)) / (h * h);
    let coarse = d(&mut f, h);
    let fine = d(&mut f, 0.5 * h);
    (4.0 * fine - coarse) / 3.0
}

/// Composite trapezoid over uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Standard normal distribution function via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        let rule = GaussLegendre::new(16);
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_exact_for_degree_31() {
        let rule = GaussLegendre::new(16);
        let v = rule.composite(|x| x.powi(30) + x.powi(31), -1.0, 1.0, 1);
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_integration_of_exponential() {
        let q = integrate(|x: f64| x.exp(), 0.0, 3.0);
        assert!(q.converged);
        assert!((q.value - (3f64.exp() - 1.0)).abs() < 1e-12 * 3f64.exp());
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-9);
        assert!(fx < 1e-18);
    }

    #[test]
    fn second_derivative_of_cubic() {
        let d = second_derivative(|x| x * x * x, 0.7, 1e-3);
        assert!((d - 4.2).abs() < 1e-6);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        // mpmath: ncdf(-1.959963984540054) = 0.025000000000000010876
        assert!((normal_cdf(-1.959963984540054) - 0.025_000_000_000_000_011).abs() < 1e-17);
        assert!((2.0 * normal_cdf(-std::f64::consts::SQRT_2) - 0.157_299_207_050_285_13).abs() < 1e-16);
    }
}
