//! Batch-size schedules.
//!
//! The theoretical schedules grow like `eps^-4` (or worse) and are meant for
//! verifying bounds at moderate `eps`; practical runs use fixed sizes.

use crate::error::{Error, Result};
use crate::problem::ProblemConstants;

/// Constants entering the schedules: the prox parameter `M` plus the problem constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConstants {
    pub m: f64,
    pub m_phi: f64,
    pub l_f: f64,
    pub sigma_f: f64,
    pub sigma_d: f64,
    pub m_f: Option<f64>,
}

impl ScheduleConstants {
    pub fn new(m: f64, c: &ProblemConstants) -> Self {
        Self { m, m_phi: c.m_phi, l_f: c.l_f, sigma_f: c.sigma_f, sigma_d: c.sigma_d, m_f: c.m_f }
    }

    /// `C_g = 2M - M_phi (L_F + beta_d)`
    pub fn c_g(&self, beta_d: f64) -> f64 {
        2.0 * self.m - self.m_phi * (self.l_f + beta_d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationParams {
    pub eps: f64,
    pub beta_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteSumParams {
    pub eps: f64,
    /// Failure probability in `(0, 1]`.
    pub delta: f64,
    pub beta_d: f64,
    pub c_f: f64,
    pub c_d: f64,
}

impl FiniteSumParams {
    /// `C_a = 2M - M_phi (L_F + beta_d + 2 sqrt(C_f) + C_d / (2 beta_d))`
    pub fn c_a(&self, c: &ScheduleConstants) -> f64 {
        2.0 * c.m - c.m_phi * (c.l_f + self.beta_d + 2.0 * self.c_f.sqrt() + self.c_d / (2.0 * self.beta_d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SarahParams {
    pub eps: f64,
    /// Epoch-length constant `C` in `m = 8 gap / (theta_F C eps)`.
    pub c: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta_d: f64,
}

impl SarahParams {
    /// `theta_F = 2M - M_phi (L_F + delta_d) - gamma1 M_F^2 - gamma2 L_F^2`
    pub fn theta_f(&self, c: &ScheduleConstants) -> Result<f64> {
        let m_f = c.m_f.ok_or_else(|| {
            Error::InvalidConfiguration("the SARAH schedule needs the average Lipschitz constant M_F".into())
        })?;
        Ok(2.0 * c.m - c.m_phi * (c.l_f + self.delta_d) - self.gamma1 * m_f * m_f - self.gamma2 * c.l_f * c.l_f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchSchedule {
    Fixed { b: usize, bhat: usize },
    Expectation(ExpectationParams),
    FiniteSum(FiniteSumParams),
    Sarah(SarahParams),
}

/// Floors `raw` and clamps it to `[1, n]` (`[1, inf)` in expectation mode).
pub fn clamp_batch(raw: f64, n: Option<usize>) -> usize {
    let upper = n.unwrap_or(usize::MAX).max(1);
    if raw.is_nan() {
        return upper;
    }
    let floored = raw.floor();
    if floored >= upper as f64 {
        upper
    } else if floored < 1.0 {
        1
    } else {
        floored as usize
    }
}

/// Unclamped sizes `256 M_phi^2 M^4 sigma_F^2 / (C_g^2 eps^4)` and
/// `2 M_phi M^2 sigma_D^2 / (beta_d C_g eps^2)`.
pub fn minibatch_expectation_raw(c: &ScheduleConstants, p: &ExpectationParams) -> Result<(f64, f64)> {
    check_positive("eps", p.eps)?;
    check_positive("beta_d", p.beta_d)?;
    let c_g = c.c_g(p.beta_d);
    if c_g <= 0.0 {
        return Err(Error::InvalidConfiguration(format!("C_g = 2M - M_phi (L_F + beta_d) = {c_g} is not positive")));
    }
    let m2 = c.m * c.m;
    let b = 256.0 * c.m_phi.powi(2) * m2 * m2 * c.sigma_f.powi(2) / (c_g * c_g * p.eps.powi(4));
    let bhat = 2.0 * c.m_phi * m2 * c.sigma_d.powi(2) / (p.beta_d * c_g * p.eps * p.eps);
    Ok((b, bhat))
}

/// Constant sizes for the expectation setting, clamped to `[1, n]` when `n` is given.
pub fn schedule_minibatch_expectation(
    c: &ScheduleConstants,
    p: &ExpectationParams,
    n: Option<usize>,
) -> Result<(usize, usize)> {
    let (b, bhat) = minibatch_expectation_raw(c, p)?;
    Ok((clamp_batch(b, n), clamp_batch(bhat, n)))
}

/// Unclamped adaptive finite-sum sizes at iteration `t`; `step_norm = ||x_t - x_{t-1}||`
/// is ignored at `t = 0`. Returns `None` when the formula is singular (`step_norm = 0`).
pub fn minibatch_finitesum_raw(
    c: &ScheduleConstants,
    prm: &FiniteSumParams,
    t: usize,
    step_norm: f64,
    p: usize,
    q: usize,
) -> Result<Option<(f64, f64)>> {
    check_positive("eps", prm.eps)?;
    check_positive("beta_d", prm.beta_d)?;
    check_positive("C_f", prm.c_f)?;
    check_positive("C_d", prm.c_d)?;
    if !(prm.delta > 0.0 && prm.delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1], got {}", prm.delta)));
    }
    let log_f = ((p as f64 + 1.0) / prm.delta).ln();
    let log_d = ((p + q) as f64 / prm.delta).ln();
    let (sf, sd) = (c.sigma_f, c.sigma_d);
    if t == 0 {
        let c_a = prm.c_a(c);
        if c_a <= 0.0 {
            return Err(Error::InvalidConfiguration(format!("C_a = {c_a} is not positive")));
        }
        let (m, mp, eps) = (c.m, c.m_phi, prm.eps);
        let b0 = 32.0 * mp * m * m * sf * (48.0 * sf * mp * m * m + c_a * eps * eps) / (3.0 * c_a * c_a * eps.powi(4))
            * log_f;
        let root = m * (2.0 * mp).sqrt() * sd;
        let bhat0 = 4.0 * root * (3.0 * root + (prm.beta_d * c_a).sqrt() * eps) / (prm.beta_d * c_a * eps * eps) * log_d;
        return Ok(Some((b0, bhat0)));
    }
    if !(step_norm > 0.0) {
        return Ok(None);
    }
    let s2 = step_norm * step_norm;
    let b = (6.0 * sf * sf + 2.0 * sf * prm.c_f.sqrt() * s2) / (3.0 * prm.c_f * prm.c_f * s2 * s2) * log_f;
    let bhat = (6.0 * sd * sd + 2.0 * sd * prm.c_d.sqrt() * step_norm) / (3.0 * prm.c_d * s2) * log_d;
    Ok(Some((b, bhat)))
}

/// Adaptive finite-sum sizes, `min(n, .)` of the raw values. A zero step at `t >= 1`
/// yields the full batch.
pub fn schedule_minibatch_finitesum(
    c: &ScheduleConstants,
    prm: &FiniteSumParams,
    t: usize,
    step_norm: f64,
    p: usize,
    q: usize,
    n: usize,
) -> Result<(usize, usize)> {
    match minibatch_finitesum_raw(c, prm, t, step_norm, p, q)? {
        Some((b, bhat)) => Ok((clamp_batch(b, Some(n)), clamp_batch(bhat, Some(n)))),
        None => Ok((n, n)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SarahSizes {
    /// Inner-loop length.
    pub m: usize,
    pub b_s: usize,
    pub bhat_s: usize,
    pub b_t: usize,
    pub bhat_t: usize,
}

/// Epoch length, snapshot sizes and the inner sizes at inner index `t` (`0..=m`).
pub fn schedule_sarah(
    c: &ScheduleConstants,
    prm: &SarahParams,
    psi0_gap: f64,
    t: usize,
    n: Option<usize>,
) -> Result<SarahSizes> {
    check_positive("eps", prm.eps)?;
    check_positive("C", prm.c)?;
    check_positive("gamma1", prm.gamma1)?;
    check_positive("gamma2", prm.gamma2)?;
    check_positive("delta_d", prm.delta_d)?;
    let theta = prm.theta_f(c)?;
    if theta <= 0.0 {
        return Err(Error::InvalidConfiguration(format!("theta_F = {theta} is not positive")));
    }
    let eps = prm.eps;
    let m = clamp_batch(8.0 * psi0_gap.max(0.0) / (theta * prm.c * eps), None);
    let remaining = (m + 1).saturating_sub(t) as f64;
    let mp = c.m_phi;
    let b_s = 2.0 * prm.c * mp * mp * c.sigma_f.powi(2) / (theta * theta * eps.powi(3));
    let bhat_s = 4.0 * prm.c * mp * c.sigma_d.powi(2) / (theta * prm.delta_d * eps);
    let b_t = 8.0 * mp * mp * remaining / (theta * prm.gamma1 * eps * eps);
    let bhat_t = mp * remaining / (prm.gamma2 * prm.delta_d);
    Ok(SarahSizes {
        m,
        b_s: clamp_batch(b_s, n),
        bhat_s: clamp_batch(bhat_s, n),
        b_t: clamp_batch(b_t, n),
        bhat_t: clamp_batch(bhat_t, n),
    })
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}
