//! Mini-batch and SARAH estimators of `F(x)` and `F'(x)`.

pub mod schedule;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::LinearMap;
use crate::problem::{dense_average, CompositionProblem, SampleCount, SampledJacobian};

pub use schedule::{
    clamp_batch, schedule_minibatch_expectation, schedule_minibatch_finitesum, schedule_sarah, BatchSchedule,
    ExpectationParams, FiniteSumParams, SarahParams, SarahSizes, ScheduleConstants,
};

/// Draws a batch of `b` samples.
///
/// Finite sums: `b` distinct indices uniformly without replacement, returned sorted
/// (`b >= n` gives all of `0..n`). Expectation: `b` fresh seeds.
pub fn sample_batch<R: Rng + ?Sized>(count: SampleCount, b: usize, rng: &mut R) -> Result<Vec<usize>> {
    if b == 0 {
        return Err(Error::InvalidParameter("batch size must be at least 1".into()));
    }
    match count {
        SampleCount::Finite(n) => {
            if b >= n {
                if b > n {
                    log::warn!("batch size {b} exceeds the {n} available samples; using all of them");
                }
                return Ok((0..n).collect());
            }
            let mut idx = index::sample(rng, n, b).into_vec();
            idx.sort_unstable();
            Ok(idx)
        }
        SampleCount::Expectation => Ok((0..b).map(|_| rng.random::<u64>() as usize).collect()),
    }
}

/// How a mini-batch Jacobian is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianForm {
    /// Dense when a dense product is cheaper than one pass over the samples.
    #[default]
    Auto,
    Dense,
    Operator,
}

#[derive(Debug, Clone)]
pub enum JacobianEstimate {
    Dense(DMatrix<f64>),
    Sampled(SampledJacobian),
}

impl JacobianEstimate {
    pub fn into_dense(self) -> DMatrix<f64> {
        match self {
            Self::Dense(m) => m,
            Self::Sampled(s) => s.to_dense(),
        }
    }
}

impl LinearMap for JacobianEstimate {
    fn nrows(&self) -> usize {
        match self {
            Self::Dense(m) => m.nrows(),
            Self::Sampled(s) => s.nrows(),
        }
    }

    fn ncols(&self) -> usize {
        match self {
            Self::Dense(m) => m.ncols(),
            Self::Sampled(s) => s.ncols(),
        }
    }

    fn apply(&self, d: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense(m) => m * d,
            Self::Sampled(s) => s.apply(d),
        }
    }

    fn apply_adjoint(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense(m) => m.tr_mul(u),
            Self::Sampled(s) => s.apply_adjoint(u),
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Dense(m) => m.clone(),
            Self::Sampled(s) => s.to_dense(),
        }
    }
}

/// Current estimates `(F~, J~)` with their batch sizes.
///
/// The cumulative counters are a snapshot of the problem's oracle counters taken when
/// the estimate was produced.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub f_tilde: DVector<f64>,
    pub j_tilde: JacobianEstimate,
    pub b_used: usize,
    pub bhat_used: usize,
    pub cumulative_f_calls: u64,
    pub cumulative_j_calls: u64,
}

/// Batch averages of sample values over `batch_f` and Jacobians over `batch_j`.
pub fn minibatch_estimate(
    problem: &CompositionProblem,
    x: &DVector<f64>,
    batch_f: &[usize],
    batch_j: &[usize],
    form: JacobianForm,
) -> Result<Estimate> {
    if batch_f.is_empty() || batch_j.is_empty() {
        return Err(Error::InvalidParameter("estimator batches must be nonempty".into()));
    }
    check_dim(problem, x)?;
    let (q, p) = (problem.range(), problem.dim());
    let f_tilde = problem.average_value(x, batch_f);
    let parts = problem.jacobians_over(x, batch_j);
    let sampled = SampledJacobian::new(parts, q, p);
    let dense = match form {
        JacobianForm::Dense => true,
        JacobianForm::Operator => false,
        JacobianForm::Auto => q * p <= sampled.product_cost(),
    };
    let j_tilde = if dense {
        JacobianEstimate::Dense(sampled.to_dense())
    } else {
        JacobianEstimate::Sampled(sampled)
    };
    let (cf, cj) = problem.counters();
    Ok(Estimate {
        f_tilde,
        j_tilde,
        b_used: batch_f.len(),
        bhat_used: batch_j.len(),
        cumulative_f_calls: cf,
        cumulative_j_calls: cj,
    })
}

/// SARAH update from `prev` (made at `x_prev`) to `x_curr`:
/// `F~ += mean_B [F(x_curr) - F(x_prev)]`, `J~ += mean_B^ [F'(x_curr) - F'(x_prev)]`.
/// Each batch member is evaluated at both points; the Jacobian is kept dense.
pub fn sarah_update(
    problem: &CompositionProblem,
    prev: &Estimate,
    x_prev: &DVector<f64>,
    x_curr: &DVector<f64>,
    batch_f: &[usize],
    batch_j: &[usize],
) -> Result<Estimate> {
    if batch_f.is_empty() || batch_j.is_empty() {
        return Err(Error::InvalidParameter("estimator batches must be nonempty".into()));
    }
    let (q, p) = (problem.range(), problem.dim());
    if prev.f_tilde.len() != q || prev.j_tilde.nrows() != q || prev.j_tilde.ncols() != p {
        return Err(Error::InvalidState(format!(
            "previous estimate has shape F: {}, J: {}x{}; problem has q = {q}, p = {p}",
            prev.f_tilde.len(),
            prev.j_tilde.nrows(),
            prev.j_tilde.ncols()
        )));
    }
    if x_prev.len() != p || x_curr.len() != p {
        return Err(Error::InvalidState("iterate dimension does not match the problem".into()));
    }

    let now = problem.values_over(x_curr, batch_f);
    let before = problem.values_over(x_prev, batch_f);
    let mut df = DVector::zeros(q);
    for (a, b) in now.iter().zip(&before) {
        df += a - b;
    }
    let f_tilde = &prev.f_tilde + df / batch_f.len() as f64;

    let now = problem.jacobians_over(x_curr, batch_j);
    let before = problem.jacobians_over(x_prev, batch_j);
    let mut dj = DMatrix::zeros(q, p);
    for (a, b) in now.iter().zip(&before) {
        a.add_to_dense(1.0, &mut dj);
        b.add_to_dense(-1.0, &mut dj);
    }
    let j_tilde = prev.j_tilde.to_dense() + dj / batch_j.len() as f64;

    let (cf, cj) = problem.counters();
    Ok(Estimate {
        f_tilde,
        j_tilde: JacobianEstimate::Dense(j_tilde),
        b_used: batch_f.len(),
        bhat_used: batch_j.len(),
        cumulative_f_calls: cf,
        cumulative_j_calls: cj,
    })
}

/// Dense average of sample Jacobians; exposed for tests and diagnostics.
pub fn dense_jacobian_average(problem: &CompositionProblem, x: &DVector<f64>, batch: &[usize]) -> DMatrix<f64> {
    let parts = problem.jacobians_over(x, batch);
    dense_average(&parts, problem.range(), problem.dim())
}

fn check_dim(problem: &CompositionProblem, x: &DVector<f64>) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(Error::InvalidState(format!("x has {} entries, problem dimension is {}", x.len(), problem.dim())));
    }
    Ok(())
}
