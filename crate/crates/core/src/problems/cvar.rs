//! Mean-CVaR asset allocation with a smoothed Rockafellar-Uryasev constraint.
//!
//! The variable is `x = (z, tau)` with `z` on the unit simplex and `tau` in a box.
//! The objective is `-c^T z + rho [ (1/n) sum_i F(x, xi_i) ]_+` where
//! `F(x, xi) = tau + (sqrt(w^2 + gamma^2) - gamma - w) / (2 beta)` and `w = xi^T z + tau`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::outer::OuterFunction;
use crate::problem::{CompositionProblem, ProblemConstants, SampleCount, SampleJacobian, SampleOracle};
use crate::problems::data::ReturnsDataset;
use crate::regularizer::Regularizer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvarParams {
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
}

impl Default for CvarParams {
    fn default() -> Self {
        Self { beta: 0.1, gamma: 1e-3, rho: 5.0, tau_lo: 0.0, tau_hi: 1.0 }
    }
}

impl CvarParams {
    /// Step parameter used with these defaults.
    pub const DEFAULT_M: f64 = 5.0;

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("rho", self.rho)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tau_lo <= self.tau_hi) || !self.tau_lo.is_finite() || !self.tau_hi.is_finite() {
            return Err(Error::InvalidParameter(format!("tau bounds [{}, {}] are invalid", self.tau_lo, self.tau_hi)));
        }
        Ok(())
    }
}

/// `(sqrt(w^2 + gamma^2) - gamma - w)`, evaluated without cancellation for large `|w|`.
fn smoothed_negative_part(w: f64, gamma: f64) -> f64 {
    let r = w.hypot(gamma);
    let excess = gamma * gamma / (r + w.abs()) - gamma;
    excess + (w.abs() - w)
}

fn split(x: &DVector<f64>) -> (nalgebra::DVectorView<'_, f64>, f64) {
    let p = x.len() - 1;
    (x.rows(0, p), x[p])
}

/// Value and gradient in `(z, tau)` of the smoothed component at scenario `xi`.
/// `x` stacks `z` (length `p`) and `tau`.
pub fn cvar_component(x: &DVector<f64>, xi: &DVector<f64>, beta: f64, gamma: f64) -> Result<(f64, DVector<f64>)> {
    if !(beta > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidParameter("beta and gamma must be positive".into()));
    }
    if x.len() != xi.len() + 1 {
        return Err(Error::InvalidInput(format!("x has length {}, expected {}", x.len(), xi.len() + 1)));
    }
    let (z, tau) = split(x);
    Ok(component_parts(xi.dot(&z) + tau, xi, tau, beta, gamma))
}

fn component_parts(w: f64, xi: &DVector<f64>, tau: f64, beta: f64, gamma: f64) -> (f64, DVector<f64>) {
    let value = tau + smoothed_negative_part(w, gamma) / (2.0 * beta);
    let s = (w / w.hypot(gamma) - 1.0) / (2.0 * beta);
    let p = xi.len();
    let mut grad = DVector::zeros(p + 1);
    grad.rows_mut(0, p).axpy(s, xi, 0.0);
    grad[p] = 1.0 + s;
    (value, grad)
}

/// The unsmoothed term `tau + [-(xi^T z + tau)]_+ / beta`.
pub fn cvar_hinge_component(x: &DVector<f64>, xi: &DVector<f64>, beta: f64) -> f64 {
    let (z, tau) = split(x);
    tau + (-(xi.dot(&z) + tau)).max(0.0) / beta
}

#[derive(Debug, Clone)]
pub struct CvarOracle {
    data: Arc<ReturnsDataset>,
    beta: f64,
    gamma: f64,
}

impl CvarOracle {
    pub fn new(data: Arc<ReturnsDataset>, beta: f64, gamma: f64) -> Self {
        Self { data, beta, gamma }
    }

    fn evaluate(&self, x: &DVector<f64>, i: usize) -> (f64, DVector<f64>) {
        let xi = self.data.scenario(i);
        let (z, tau) = split(x);
        component_parts(xi.dot(&z) + tau, &xi, tau, self.beta, self.gamma)
    }
}

impl SampleOracle for CvarOracle {
    fn dim(&self) -> usize {
        self.data.p() + 1
    }

    fn range(&self) -> usize {
        1
    }

    fn count(&self) -> SampleCount {
        SampleCount::Finite(self.data.n())
    }

    fn value(&self, x: &DVector<f64>, sample: usize) -> DVector<f64> {
        let (z, tau) = split(x);
        let w = self.data.scenarios().row(sample).transpose().dot(&z) + tau;
        DVector::from_element(1, tau + smoothed_negative_part(w, self.gamma) / (2.0 * self.beta))
    }

    fn jacobian(&self, x: &DVector<f64>, sample: usize) -> SampleJacobian {
        let (_, g) = self.evaluate(x, sample);
        SampleJacobian::Dense(DMatrix::from_row_slice(1, g.len(), g.as_slice()))
    }

    fn value_and_jacobian(&self, x: &DVector<f64>, sample: usize) -> (DVector<f64>, SampleJacobian) {
        let (v, g) = self.evaluate(x, sample);
        (DVector::from_element(1, v), SampleJacobian::Dense(DMatrix::from_row_slice(1, g.len(), g.as_slice())))
    }
}

/// Analytic constants: `L_F = mean(||xi_i||^2 + 1) / (2 beta gamma)` and
/// `M_F^2 = mean ||xi_i||^2 / beta^2 + max(1, 1/beta - 1)^2`.
pub fn cvar_constants(data: &ReturnsDataset, beta: f64, gamma: f64) -> (f64, f64) {
    let n = data.n().max(1) as f64;
    let mean_sq = data.scenarios().row_iter().map(|r| r.norm_squared()).sum::<f64>() / n;
    let l_f = (mean_sq + 1.0) / (2.0 * beta * gamma);
    let tau_slope = 1f64.max(1.0 / beta - 1.0);
    let m_f = (mean_sq / (beta * beta) + tau_slope * tau_slope).sqrt();
    (l_f, m_f)
}

/// The smoothed asset-allocation problem over `data`. `phi` is the hinge penalty with
/// weight `rho`; `g` is `-c^T z` plus the indicator of `Delta_p x [tau_lo, tau_hi]`.
pub fn make_cvar_problem(data: ReturnsDataset, params: CvarParams) -> Result<CompositionProblem> {
    params.validate()?;
    if data.n() == 0 || data.p() == 0 {
        return Err(Error::InvalidInput("CVaR problem needs at least one scenario and one asset".into()));
    }
    let p = data.p();
    let mut linear = DVector::zeros(p + 1);
    linear.rows_mut(0, p).copy_from(&(-data.expected()));
    let g = Regularizer::simplex_box(linear, p, params.tau_lo, params.tau_hi)?;
    let (l_f, m_f) = cvar_constants(&data, params.beta, params.gamma);
    let oracle = CvarOracle::new(Arc::new(data), params.beta, params.gamma);
    let problem = CompositionProblem::new(oracle, OuterFunction::hinge(params.rho));
    let constants = ProblemConstants { l_f, m_f: Some(m_f), ..problem.constants };
    Ok(problem.with_constants(constants).with_regularizer(g))
}
