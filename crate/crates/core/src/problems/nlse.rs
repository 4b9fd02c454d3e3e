//! Nonlinear least-squares-type classification with four nonconvex losses.
//!
//! Each sample contributes the stacked losses `(l_1(m), ..., l_4(m))` of its margin
//! `m = y (a^T x + b)`, and `F` is their average over the data set.

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::SparseVector;
use crate::outer::OuterFunction;
use crate::problem::{CompositionProblem, ProblemConstants, SampleCount, SampleJacobian, SampleOracle};
use crate::problems::data::ClassificationDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NlseLoss {
    /// `1 - tanh(m)`
    Tanh,
    /// `sigmoid(-m)^2`
    SigmoidSquared,
    /// `log(1 + e^{-m}) - log(1 + e^{-m-1})`
    LogisticDifference,
    /// `log(1 + (m - 1)^2)`
    LogSquared,
}

impl NlseLoss {
    pub const ALL: [NlseLoss; 4] = [Self::Tanh, Self::SigmoidSquared, Self::LogisticDifference, Self::LogSquared];

    /// Loss by its 1-based position in [`NlseLoss::ALL`].
    pub fn from_id(id: usize) -> Result<Self> {
        id.checked_sub(1)
            .and_then(|i| Self::ALL.get(i).copied())
            .ok_or_else(|| Error::InvalidParameter(format!("loss id {id} is not in 1..=4")))
    }

    pub fn value(self, m: f64) -> f64 {
        match self {
            Self::Tanh => 2.0 * sigmoid(-2.0 * m),
            Self::SigmoidSquared => sigmoid(-m).powi(2),
            Self::LogisticDifference => softplus(-m) - softplus(-m - 1.0),
            Self::LogSquared => (m - 1.0).powi(2).ln_1p(),
        }
    }

    /// Derivative with respect to the margin.
    pub fn derivative(self, m: f64) -> f64 {
        match self {
            Self::Tanh => -4.0 * sigmoid(2.0 * m) * sigmoid(-2.0 * m),
            Self::SigmoidSquared => -2.0 * sigmoid(-m).powi(2) * sigmoid(m),
            Self::LogisticDifference => sigmoid(-m - 1.0) - sigmoid(-m),
            Self::LogSquared => 2.0 * (m - 1.0) / (1.0 + (m - 1.0).powi(2)),
        }
    }

    /// `sup_m |l'(m)|`.
    pub fn slope_bound(self) -> f64 {
        match self {
            Self::Tanh => 1.0,
            // 2 s^2 (1 - s) with s = sigmoid(-m) peaks at s = 2/3
            Self::SigmoidSquared => 8.0 / 27.0,
            Self::LogisticDifference => 0.25,
            Self::LogSquared => 1.0,
        }
    }

    /// `sup_m |l''(m)|`.
    pub fn curvature_bound(self) -> f64 {
        match self {
            Self::Tanh => 4.0 / (3.0 * 3f64.sqrt()),
            Self::SigmoidSquared => sigmoid_squared_curvature_bound(),
            Self::LogisticDifference => 0.25,
            Self::LogSquared => 2.0,
        }
    }
}

impl FromStr for NlseLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_id(s.parse().map_err(|_| Error::InvalidParameter(format!("bad loss id '{s}'")))?)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `l''(m) = 2 s^2 (1 - s)(2 - 3 s)` with `s = sigmoid(-m)`; maximized on a grid over
/// `s` and inflated by 1% to cover the grid spacing.
fn sigmoid_squared_curvature_bound() -> f64 {
    let steps = 10_000;
    let peak = (0..=steps)
        .map(|k| {
            let s = k as f64 / steps as f64;
            (2.0 * s * s * (1.0 - s) * (2.0 - 3.0 * s)).abs()
        })
        .fold(0.0, f64::max);
    1.01 * peak
}

fn margin(x: &DVector<f64>, a: &SparseVector, b: f64, y: f64) -> f64 {
    y * (a.dot(x) + b)
}

/// Value and gradient in `x` of loss `loss_id` (1..=4) at the sample `(a, b, y)`.
pub fn nlse_component(loss_id: usize, x: &DVector<f64>, a: &SparseVector, b: f64, y: f64) -> Result<(f64, DVector<f64>)> {
    let loss = NlseLoss::from_id(loss_id)?;
    if a.dim() != x.len() {
        return Err(Error::InvalidInput(format!("feature dimension {} does not match x of length {}", a.dim(), x.len())));
    }
    let m = margin(x, a, b, y);
    let mut grad = DVector::zeros(x.len());
    a.axpy_into(loss.derivative(m) * y, &mut grad);
    Ok((loss.value(m), grad))
}

/// Per-sample oracle with `q = 4` stacked losses and rank-one Jacobians.
#[derive(Debug, Clone)]
pub struct NlseOracle {
    data: Arc<ClassificationDataset>,
}

impl NlseOracle {
    pub fn new(data: Arc<ClassificationDataset>) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &ClassificationDataset {
        &self.data
    }

    fn sample_margin(&self, x: &DVector<f64>, i: usize) -> (f64, f64) {
        let y = self.data.label(i);
        (margin(x, self.data.row(i), self.data.bias(i), y), y)
    }
}

impl SampleOracle for NlseOracle {
    fn dim(&self) -> usize {
        self.data.p()
    }

    fn range(&self) -> usize {
        NlseLoss::ALL.len()
    }

    fn count(&self) -> SampleCount {
        SampleCount::Finite(self.data.n())
    }

    fn value(&self, x: &DVector<f64>, sample: usize) -> DVector<f64> {
        let (m, _) = self.sample_margin(x, sample);
        DVector::from_iterator(4, NlseLoss::ALL.iter().map(|l| l.value(m)))
    }

    fn jacobian(&self, x: &DVector<f64>, sample: usize) -> SampleJacobian {
        let (m, y) = self.sample_margin(x, sample);
        let coeff = DVector::from_iterator(4, NlseLoss::ALL.iter().map(|l| l.derivative(m) * y));
        SampleJacobian::Outer { coeff, row: self.data.row(sample).clone() }
    }
}

/// Analytic constants of the NLSE map over `data`:
/// `L_F = mean ||a_i||^2 * sqrt(sum_j sup |l_j''|^2)` and
/// `M_F = sqrt(mean ||a_i||^2) * sqrt(sum_j sup |l_j'|^2)`.
pub fn nlse_constants(data: &ClassificationDataset) -> (f64, f64) {
    let n = data.n().max(1) as f64;
    let mean_sq = data.rows().iter().map(|r| r.norm_squared()).sum::<f64>() / n;
    let curv = NlseLoss::ALL.iter().map(|l| l.curvature_bound().powi(2)).sum::<f64>().sqrt();
    let slope = NlseLoss::ALL.iter().map(|l| l.slope_bound().powi(2)).sum::<f64>().sqrt();
    (mean_sq * curv, mean_sq.sqrt() * slope)
}

/// `min_x phi((1/n) sum_i F(x, xi_i))` with the four stacked losses and no regularizer.
/// `M_phi`, `L_F` and `M_F` are set analytically; the variances are left at zero.
pub fn make_nlse_problem(data: ClassificationDataset, outer: OuterFunction) -> Result<CompositionProblem> {
    if data.is_empty() {
        return Err(Error::InvalidInput("NLSE problem needs at least one sample".into()));
    }
    let (l_f, m_f) = nlse_constants(&data);
    let oracle = NlseOracle::new(Arc::new(data));
    let problem = CompositionProblem::new(oracle, outer);
    let constants = ProblemConstants { l_f, m_f: Some(m_f), ..problem.constants };
    Ok(problem.with_constants(constants))
}
