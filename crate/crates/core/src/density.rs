//! Tabulated density curves shared by theory, Volterra and Monte Carlo output.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    TheoryMetastable,
    TheoryLaplace,
    Volterra,
    McHistogram,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::TheoryMetastable => "theory-metastable",
            Provenance::TheoryLaplace => "theory-laplace",
            Provenance::Volterra => "volterra",
            Provenance::McHistogram => "mc-histogram",
        }
    }
}

/// Density values on strictly increasing times, optionally with a
/// confidence band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub meta: Provenance,
}

impl DensityGrid {
    pub fn new(times: Vec<f64>, values: Vec<f64>, meta: Provenance) -> Self {
        assert_eq!(times.len(), values.len());
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]), "times must increase");
        Self { times, values, lower: None, upper: None, meta }
    }

    pub fn with_band(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), self.values.len());
        assert_eq!(upper.len(), self.values.len());
        self.lower = Some(lower);
        self.upper = Some(upper);
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index and time of the largest value.
    pub fn argmax(&self) -> Option<(usize, f64)> {
        (0..self.len()).max_by(|&a, &b| self.values[a].total_cmp(&self.values[b])).map(|i| (i, self.times[i]))
    }
}
