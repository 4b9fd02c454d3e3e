//! Accelerated proximal gradient on the dual
//! `min_u ||J^T u||^2 / (2M) - <F, u> + phi*(u)`, with `d = -J^T u / M`.

use nalgebra::DVector;

use super::{BestIterate, ProxLinearSolution, ProxLinearSubproblem};
use crate::error::{Error, Result};

/// Runs FISTA on the dual until the primal-dual residual drops below `tol`.
///
/// The momentum is reset whenever the step direction and the last displacement
/// disagree (gradient-based adaptive restart); without restarts the recursion is the
/// plain `tau_{k+1} = (1 + sqrt(1 + 4 tau_k^2)) / 2` scheme.
pub fn solve_proxlinear_adpg(
    sub: &ProxLinearSubproblem<'_>,
    tol: f64,
    k_max: usize,
    u0: Option<&DVector<f64>>,
) -> Result<ProxLinearSolution> {
    if sub.regularizer.is_some() {
        return Err(Error::Unsupported(
            "the dual proximal-gradient solver handles g = 0 only; use the primal-dual solver".into(),
        ));
    }
    let m = sub.m;
    let lipschitz = sub.gram_norm() / m;
    let step = 1.0 / lipschitz;
    let reconstruct = |u: &DVector<f64>| sub.j_tilde.apply_adjoint(u) / (-m);

    let mut u = u0.cloned().unwrap_or_else(|| DVector::zeros(sub.range()));
    let d = reconstruct(&u);
    let r0 = sub.residual(&d, &u);
    let mut best = BestIterate { d, u: u.clone(), residual: r0 };
    if r0 <= tol {
        return Ok(best.into_solution(0, true));
    }

    let mut u_hat = u.clone();
    let mut tau = 1.0_f64;
    for k in 1..=k_max {
        let grad = sub.j_tilde.apply(&sub.j_tilde.apply_adjoint(&u_hat)) / m - sub.f_tilde;
        let u_next = sub.outer.prox_conjugate(&(&u_hat - grad * step), step);
        let tau_next = 0.5 * (1.0 + (1.0 + 4.0 * tau * tau).sqrt());
        let restart = (&u_hat - &u_next).dot(&(&u_next - &u)) > 0.0;
        if restart {
            tau = 1.0;
            u_hat.copy_from(&u_next);
        } else {
            u_hat = &u_next + (&u_next - &u) * ((tau - 1.0) / tau_next);
            tau = tau_next;
        }
        u = u_next;

        let d = reconstruct(&u);
        let r = sub.residual(&d, &u);
        best.offer(&d, &u, r);
        if r <= tol {
            return Ok(best.into_solution(k, true));
        }
    }
    Ok(best.into_solution(k_max, false))
}
