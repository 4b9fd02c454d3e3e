//! Chambolle-Pock primal-dual method for the strongly convex prox-linear subproblem,
//! with `phi_hat(z) = phi(z + F)` and `psi_hat(d) = g(x + d) + (M/2) ||d||^2`.

use nalgebra::DVector;

use super::{BestIterate, ProxLinearSolution, ProxLinearSubproblem};
use crate::error::Result;

/// Step-size damping `1 / sqrt(1 + 2 M tau)` of the accelerated primal-dual scheme.
pub fn pd_theta(m: f64, tau: f64) -> f64 {
    1.0 / (1.0 + 2.0 * m * tau).sqrt()
}

/// `prox_{tau psi_hat}(v)`
fn prox_psi(sub: &ProxLinearSubproblem<'_>, v: &DVector<f64>, tau: f64) -> DVector<f64> {
    let shrink = 1.0 + sub.m * tau;
    sub.prox_shifted_regularizer(&(v / shrink), tau / shrink)
}

/// Iterations between resets of the step-size schedule.
pub const STEP_RESET_PERIOD: usize = 20;

/// Runs the primal-dual recursion from `sigma_0 = tau_0 = 1 / ||J||` until the residual
/// drops below `tol`. The primal start is the best response to the (warm) dual start.
///
/// With `tau_k -> 0` the primal iterates only converge like `1/k`, so every
/// [`STEP_RESET_PERIOD`] iterations the steps go back to `(tau_0, sigma_0)` and the
/// extrapolation restarts from the current point.
pub fn solve_proxlinear_pd(
    sub: &ProxLinearSubproblem<'_>,
    tol: f64,
    k_max: usize,
    u0: Option<&DVector<f64>>,
) -> Result<ProxLinearSolution> {
    let norm_j = sub.gram_norm().sqrt();
    let step0 = 1.0 / norm_j;
    let (mut tau, mut sigma) = (step0, step0);

    let mut u = u0.cloned().unwrap_or_else(|| DVector::zeros(sub.range()));
    let mut d = sub.primal_response(&u);
    let r0 = sub.residual(&d, &u);
    let mut best = BestIterate { d: d.clone(), u: u.clone(), residual: r0 };
    if r0 <= tol {
        return Ok(best.into_solution(0, true));
    }

    let mut d_bar = d.clone();
    for k in 1..=k_max {
        let v = &u + (sub.j_tilde.apply(&d_bar) + sub.f_tilde) * sigma;
        let u_next = sub.outer.prox_conjugate(&v, sigma);
        let d_next = prox_psi(sub, &(&d - sub.j_tilde.apply_adjoint(&u_next) * tau), tau);
        let theta = pd_theta(sub.m, tau);
        tau *= theta;
        sigma /= theta;
        d_bar = &d_next + (&d_next - &d) * theta;
        d = d_next;
        u = u_next;

        let r = sub.residual(&d, &u);
        best.offer(&d, &u, r);
        if r <= tol {
            return Ok(best.into_solution(k, true));
        }
        if k % STEP_RESET_PERIOD == 0 {
            tau = step0;
            sigma = step0;
            d_bar.copy_from(&d);
        }
    }
    Ok(best.into_solution(k_max, false))
}
