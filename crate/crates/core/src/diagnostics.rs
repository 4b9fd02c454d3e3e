//! Objective evaluation, the prox-gradient mapping and stationarity / descent checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::problem::CompositionProblem;

/// `Psi(x) = phi(F(x)) + g(x)` with `F` the full average. Costs `n` function calls.
pub fn evaluate_objective(problem: &CompositionProblem, x: &DVector<f64>) -> Result<f64> {
    let f = problem.exact_value(x)?;
    Ok(problem.outer.value(&f) + problem.regularizer_value(x))
}

/// Mini-batch estimate of `Psi(x)` over `batch`.
pub fn estimate_objective(problem: &CompositionProblem, x: &DVector<f64>, batch: &[usize]) -> f64 {
    let f = problem.average_value(x, batch);
    problem.outer.value(&f) + problem.regularizer_value(x)
}

/// `G_M(x) = M (x - t)`
pub fn prox_gradient_mapping(x: &DVector<f64>, t: &DVector<f64>, m: f64) -> Result<DVector<f64>> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("M must be positive, got {m}")));
    }
    Ok((x - t) * m)
}

/// Value of the stationarity measure; `in_domain` is false (and `value` infinite) when
/// the dual vector lies outside `dom phi*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityMeasure {
    pub value: f64,
    pub in_domain: bool,
}

/// `E(x, y) = ||F'(x)^T y|| + dist(F(x), d phi*(y))` from exact `F(x)`, `F'(x)`.
pub fn stationarity_measure_at(
    problem: &CompositionProblem,
    f: &DVector<f64>,
    jac: &DMatrix<f64>,
    y: &DVector<f64>,
) -> StationarityMeasure {
    let dist = problem.outer.conjugate_subdiff_distance(y, f);
    if !dist.in_domain {
        return StationarityMeasure { value: f64::INFINITY, in_domain: false };
    }
    StationarityMeasure { value: jac.tr_mul(y).norm() + dist.value, in_domain: true }
}

/// `E(x, y)` with exact oracles (finite-sum problems without a regularizer).
pub fn stationarity_measure(
    problem: &CompositionProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<StationarityMeasure> {
    if problem.regularizer.is_some() {
        return Err(Error::Unsupported("the stationarity measure is defined for g = 0".into()));
    }
    if y.len() != problem.range() {
        return Err(Error::InvalidParameter(format!("dual vector has {} entries, expected {}", y.len(), problem.range())));
    }
    let f = problem.exact_value(x)?;
    let jac = problem.exact_jacobian(x)?;
    Ok(stationarity_measure_at(problem, &f, &jac, y))
}

/// Upper bound on `E(T(x), y)` in terms of the approximate prox-gradient norm and the
/// oracle errors:
/// `(1 + M_phi L_F / M) g + (1 + L_F) / (2 M^2) g^2 + f_err + j_err^2 / 2`.
pub fn stationarity_bound(gnorm: f64, f_err: f64, j_err: f64, m: f64, m_phi: f64, l_f: f64) -> f64 {
    (1.0 + m_phi * l_f / m) * gnorm + (1.0 + l_f) / (2.0 * m * m) * gnorm * gnorm + f_err + 0.5 * j_err * j_err
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    /// `||G_M(x)||` of the step that produced the evaluated point.
    pub gnorm: f64,
    /// `E(T(x), u*)`
    pub measure: f64,
    pub bound: f64,
    pub f_err: f64,
    pub j_err: f64,
}

impl StationarityReport {
    pub fn holds(&self) -> bool {
        self.measure <= self.bound
    }
}

/// Checks the stationarity bound for one step `x -> t` made from the estimates
/// `(f_tilde, j_tilde)` with subproblem dual `u_star`.
///
/// The measure is evaluated at `t` with the subproblem dual as the multiplier, and the
/// oracle errors `||f_tilde - F(x)||`, `||j_tilde - F'(x)||` (spectral norm) are measured
/// exactly. Requires a finite-sum problem without regularizer.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_report(
    problem: &CompositionProblem,
    x: &DVector<f64>,
    t: &DVector<f64>,
    f_tilde: &DVector<f64>,
    j_tilde: &DMatrix<f64>,
    u_star: &DVector<f64>,
    m: f64,
) -> Result<StationarityReport> {
    let f_x = problem.exact_value(x)?;
    let j_x = problem.exact_jacobian(x)?;
    let f_err = (f_tilde - f_x).norm();
    let j_err = spectral_norm(&(j_tilde - j_x));
    let gnorm = prox_gradient_mapping(x, t, m)?.norm();
    let measure = stationarity_measure(problem, t, u_star)?.value;
    let c = &problem.constants;
    Ok(StationarityReport {
        gnorm,
        measure,
        bound: stationarity_bound(gnorm, f_err, j_err, m, c.m_phi, c.l_f),
        f_err,
        j_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentCertificate {
    /// Nonnegative slack certifies the sufficient-decrease inequality for the step.
    pub slack: f64,
    /// True when `2M - M_phi L_F - beta_d M_phi <= 0`, i.e. the inequality is vacuous.
    pub vacuous: bool,
}

/// Slack of the sufficient-decrease inequality for the step `x -> t`:
///
/// `Psi(x) + 2 M_phi f_err + M_phi / (2 beta_d) j_err^2
///  - (2M - M_phi L_F - beta_d M_phi) / 2 ||t - x||^2 - Psi(t)`.
pub fn descent_certificate(
    problem: &CompositionProblem,
    x: &DVector<f64>,
    t: &DVector<f64>,
    f_err: f64,
    j_err: f64,
    m: f64,
    beta_d: f64,
) -> Result<DescentCertificate> {
    if !(beta_d > 0.0) {
        return Err(Error::InvalidParameter(format!("beta_d must be positive, got {beta_d}")));
    }
    let c = &problem.constants;
    let coeff = 2.0 * m - c.m_phi * c.l_f - beta_d * c.m_phi;
    let vacuous = coeff <= 0.0;
    if vacuous {
        log::warn!("descent bound is vacuous: 2M - M_phi L_F - beta_d M_phi = {coeff}");
    }
    let psi_x = evaluate_objective(problem, x)?;
    let psi_t = evaluate_objective(problem, t)?;
    let slack = psi_x + 2.0 * c.m_phi * f_err + c.m_phi / (2.0 * beta_d) * j_err * j_err
        - 0.5 * coeff * (t - x).norm_squared()
        - psi_t;
    Ok(DescentCertificate { slack, vacuous })
}
