use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// State after iteration `iter`, i.e. at `x_iter`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// `oracle_f / n` for finite sums.
    pub epochs: Option<f64>,
    /// Cumulative function-oracle calls spent by the estimators to reach `x_iter`.
    pub oracle_f: u64,
    pub oracle_j: u64,
    /// Exact `Psi(x_iter)` when it was evaluated.
    pub psi: Option<f64>,
    /// `||G~_M(x_iter)||^2` of the step taken from `x_iter`; `None` for the last record.
    pub gnorm_sq: Option<f64>,
    /// Subsolver iterations of the step taken from `x_iter`.
    pub subsolver_iters: usize,
    /// Elapsed wall time, only when timing is enabled.
    pub wall_ms: Option<f64>,
}

/// The data of one prox-linear step, kept for post-hoc stationarity checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSnapshot {
    pub x: DVector<f64>,
    pub next: DVector<f64>,
    pub f_tilde: DVector<f64>,
    pub j_tilde: DMatrix<f64>,
    pub u_star: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub final_iterate: DVector<f64>,
    /// `x_hat`, drawn uniformly over all iterates with the run seed.
    pub output_iterate: DVector<f64>,
    pub output_index: usize,
    /// Every iterate, when requested.
    pub iterates: Option<Vec<DVector<f64>>>,
    pub last_step: Option<StepSnapshot>,
    /// Steps whose subproblem stopped at the iteration cap (non-strict mode).
    pub unconverged_steps: usize,
}

impl RunTrace {
    /// Number of prox-linear steps taken.
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("trace has at least the initial record")
    }

    /// Smallest recorded `||G~_M(x_t)||^2`.
    pub fn min_gnorm_sq(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.gnorm_sq).reduce(f64::min)
    }

    /// Mean of the recorded `||G~_M(x_t)||^2` over the steps taken.
    pub fn mean_gnorm_sq(&self) -> Option<f64> {
        let vals: Vec<f64> = self.records.iter().filter_map(|r| r.gnorm_sq).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Lowest recorded objective value.
    pub fn best_psi(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.psi).reduce(f64::min)
    }

    /// First record whose relative residual `(psi - psi_star) / |psi_star|` is at most `level`.
    pub fn first_reaching(&self, psi_star: f64, level: f64) -> Option<&TraceRecord> {
        self.records
            .iter()
            .find(|r| r.psi.is_some_and(|p| relative_residual(p, psi_star) <= level))
    }
}

/// `(psi - psi_star) / |psi_star|`, or the absolute gap when `psi_star = 0`.
pub fn relative_residual(psi: f64, psi_star: f64) -> f64 {
    if psi_star == 0.0 {
        psi
    } else {
        (psi - psi_star) / psi_star.abs()
    }
}

/// `2 M^2 (psi0 - psi_star) / (C (T + 1)) + eps^2 / 2`: the bound on the average squared
/// prox-gradient norm over `T + 1` iterates.
pub fn rate_envelope(psi0: f64, psi_star: f64, m: f64, c: f64, t: usize, eps: f64) -> f64 {
    2.0 * m * m * (psi0 - psi_star) / (c * (t as f64 + 1.0)) + 0.5 * eps * eps
}

/// Uniform draw over the stored iterates of `trace`.
pub fn select_output<R: Rng + ?Sized>(trace: &RunTrace, rng: &mut R) -> Result<DVector<f64>> {
    let iterates = trace
        .iterates
        .as_ref()
        .ok_or_else(|| Error::InvalidState("run did not keep its iterates".into()))?;
    if iterates.is_empty() {
        return Err(Error::InvalidState("trace has no iterates".into()));
    }
    Ok(iterates[rng.random_range(0..iterates.len())].clone())
}
