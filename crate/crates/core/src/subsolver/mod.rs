//! Prox-linear subproblem
//!
//! `min_d phi(F + J d) + g(x + d) + (M/2) ||d||^2`
//!
//! solved either through its dual by accelerated proximal gradient ([`adpg`]) or by
//! the strongly convex primal-dual scheme of Chambolle and Pock ([`pd`]).

pub mod adpg;
pub mod pd;
pub mod projection;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{gram_spectral_norm, LinearMap};
use crate::outer::OuterFunction;
use crate::regularizer::Regularizer;

pub use adpg::solve_proxlinear_adpg;
pub use pd::{pd_theta, solve_proxlinear_pd};
pub use projection::{project_box, project_simplex};

pub const DEFAULT_K_MAX: usize = 10_000;

/// Relative accuracy of the power iteration for `||J^T J||`.
pub(crate) const POWER_REL_TOL: f64 = 1e-6;
const POWER_MAX_ITER: usize = 1_000;
/// Inflation of the power-iteration estimate, which approaches the true norm from below.
const NORM_SAFETY: f64 = 1.01;

/// `argmin_u phi(u) + ||u - v||^2 / (2 lambda)`
pub fn prox_outer(phi: &OuterFunction, v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    phi.prox(v, lambda)
}

/// `argmin_u phi*(u) + ||u - v||^2 / (2 lambda)`
pub fn prox_outer_conjugate(phi: &OuterFunction, v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    phi.prox_conjugate(v, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Adpg,
    PrimalDual,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adpg" => Ok(Self::Adpg),
            "pd" => Ok(Self::PrimalDual),
            other => Err(Error::InvalidParameter(format!("unknown subsolver '{other}'"))),
        }
    }
}

/// One instance of the prox-linear subproblem, centred at `center`.
pub struct ProxLinearSubproblem<'a> {
    pub f_tilde: &'a DVector<f64>,
    pub j_tilde: &'a dyn LinearMap,
    pub m: f64,
    pub outer: &'a OuterFunction,
    pub regularizer: Option<&'a Regularizer>,
    pub center: &'a DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxLinearSolution {
    /// Step `z - x`.
    pub d_star: DVector<f64>,
    /// Dual certificate, an element of `d phi(F + J d)` at optimality.
    pub u_star: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl<'a> ProxLinearSubproblem<'a> {
    pub fn new(
        f_tilde: &'a DVector<f64>,
        j_tilde: &'a dyn LinearMap,
        m: f64,
        outer: &'a OuterFunction,
        regularizer: Option<&'a Regularizer>,
        center: &'a DVector<f64>,
    ) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::InvalidParameter(format!("M must be positive, got {m}")));
        }
        if j_tilde.nrows() != f_tilde.len() || j_tilde.ncols() != center.len() {
            return Err(Error::InvalidState(format!(
                "Jacobian is {}x{} but F has {} rows and x has {} entries",
                j_tilde.nrows(),
                j_tilde.ncols(),
                f_tilde.len(),
                center.len()
            )));
        }
        Ok(Self { f_tilde, j_tilde, m, outer, regularizer, center })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn range(&self) -> usize {
        self.f_tilde.len()
    }

    /// `1e-8 * max(1, ||F||)`
    pub fn default_tol(&self) -> f64 {
        1e-8 * self.f_tilde.norm().max(1.0)
    }

    /// `phi(F + J d) + g(x + d) + (M/2) ||d||^2`
    pub fn objective(&self, d: &DVector<f64>) -> f64 {
        let z = self.f_tilde + self.j_tilde.apply(d);
        let g = self.regularizer.map_or(0.0, |g| g.value(&(self.center + d)));
        self.outer.value(&z) + g + 0.5 * self.m * d.norm_squared()
    }

    /// Dual objective `||J^T u||^2 / (2M) - <F, u> + phi*(u)` (no regularizer).
    pub fn dual_objective(&self, u: &DVector<f64>) -> f64 {
        let jtu = self.j_tilde.apply_adjoint(u);
        jtu.norm_squared() / (2.0 * self.m) - self.f_tilde.dot(u) + self.outer.conjugate_value(u)
    }

    /// `prox_{lambda g_hat}(w)` with `g_hat(d) = g(x + d)`; identity without a regularizer.
    pub fn prox_shifted_regularizer(&self, w: &DVector<f64>, lambda: f64) -> DVector<f64> {
        match self.regularizer {
            Some(g) => g.prox(&(self.center + w), lambda) - self.center,
            None => w.clone(),
        }
    }

    /// Primal response to a dual vector: `argmin_d <J^T u, d> + g_hat(d) + (M/2)||d||^2`.
    pub fn primal_response(&self, u: &DVector<f64>) -> DVector<f64> {
        let w = self.j_tilde.apply_adjoint(u) / (-self.m);
        self.prox_shifted_regularizer(&w, 1.0 / self.m)
    }

    /// Fixed-point residual of the optimality system; zero iff `(d, u)` is primal-dual optimal.
    ///
    /// Without a regularizer: `||M d + J^T u|| + ||z - prox_phi(z + u)||` with `z = F + J d`.
    /// With one, the stationarity term is replaced by `||d - prox_{g_hat}(d - J^T u - M d)||`.
    pub fn residual(&self, d: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let z = self.f_tilde + self.j_tilde.apply(d);
        let dual_gap = (&z - self.outer.prox(&(&z + u), 1.0)).norm();
        let jtu = self.j_tilde.apply_adjoint(u);
        let stationarity = match self.regularizer {
            None => (d * self.m + jtu).norm(),
            Some(_) => {
                let w = d - jtu - d * self.m;
                (d - self.prox_shifted_regularizer(&w, 1.0)).norm()
            }
        };
        stationarity + dual_gap
    }

    /// `||J^T J||`, slightly inflated, floored away from zero.
    pub(crate) fn gram_norm(&self) -> f64 {
        (gram_spectral_norm(self.j_tilde, POWER_REL_TOL, POWER_MAX_ITER) * NORM_SAFETY).max(1e-24)
    }
}

/// `subproblem_residual` in free-function form.
pub fn subproblem_residual(sub: &ProxLinearSubproblem<'_>, d: &DVector<f64>, u: &DVector<f64>) -> f64 {
    sub.residual(d, u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// `None` selects [`ProxLinearSubproblem::default_tol`].
    pub tol: Option<f64>,
    pub k_max: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kind: SolverKind::Adpg, tol: None, k_max: DEFAULT_K_MAX }
    }
}

/// Solves with the selected method, optionally warm-started from a dual vector.
pub fn solve(
    sub: &ProxLinearSubproblem<'_>,
    opts: &SolverOptions,
    warm_u: Option<&DVector<f64>>,
) -> Result<ProxLinearSolution> {
    let tol = opts.tol.unwrap_or_else(|| sub.default_tol());
    if !(tol > 0.0) || opts.k_max == 0 {
        return Err(Error::InvalidParameter("solver needs tol > 0 and k_max >= 1".into()));
    }
    let warm = warm_u.filter(|u| u.len() == sub.range());
    match opts.kind {
        SolverKind::Adpg => solve_proxlinear_adpg(sub, tol, opts.k_max, warm),
        SolverKind::PrimalDual => solve_proxlinear_pd(sub, tol, opts.k_max, warm),
    }
}

/// Keeps the iterate with the smallest residual seen so far.
pub(crate) struct BestIterate {
    pub d: DVector<f64>,
    pub u: DVector<f64>,
    pub residual: f64,
}

impl BestIterate {
    pub fn offer(&mut self, d: &DVector<f64>, u: &DVector<f64>, residual: f64) {
        if residual < self.residual {
            self.d.copy_from(d);
            self.u.copy_from(u);
            self.residual = residual;
        }
    }

    pub fn into_solution(self, iterations: usize, converged: bool) -> ProxLinearSolution {
        ProxLinearSolution { d_star: self.d, u_star: self.u, residual: self.residual, iterations, converged }
    }
}
