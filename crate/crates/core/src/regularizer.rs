//! Convex regularizers `g` with a scaled prox.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::subsolver::projection::project_simplex;

/// Feasibility slack used by [`Regularizer::value`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// `<linear, x>` plus the indicator of `Delta_k x [lo, hi]^(p-k)`: the first
    /// `simplex_dim` coordinates live on the unit simplex, the rest in a box.
    SimplexBox {
        linear: DVector<f64>,
        simplex_dim: usize,
        lo: f64,
        hi: f64,
    },
    /// `weight * ||x||_1`
    L1 { weight: f64 },
    /// `weight / 2 * ||x||^2`
    Ridge { weight: f64 },
}

impl Regularizer {
    pub fn simplex_box(linear: DVector<f64>, simplex_dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if simplex_dim == 0 || simplex_dim > linear.len() {
            return Err(Error::InvalidParameter(format!(
                "simplex block of size {simplex_dim} does not fit in dimension {}",
                linear.len()
            )));
        }
        if !(lo <= hi) {
            return Err(Error::InvalidParameter(format!("box bounds [{lo}, {hi}] are empty")));
        }
        Ok(Self::SimplexBox { linear, simplex_dim, lo, hi })
    }

    /// `g(x)`; `+inf` when `x` violates a constraint by more than [`FEASIBILITY_TOL`].
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::SimplexBox { linear, .. } => {
                if self.is_feasible(x, FEASIBILITY_TOL) {
                    linear.dot(x)
                } else {
                    f64::INFINITY
                }
            }
            Self::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            Self::Ridge { weight } => 0.5 * weight * x.norm_squared(),
        }
    }

    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self {
            Self::SimplexBox { simplex_dim, lo, hi, .. } => {
                let k = *simplex_dim;
                let z = x.rows(0, k);
                let sum_ok = (z.sum() - 1.0).abs() <= tol * (k as f64).max(1.0);
                sum_ok
                    && z.iter().all(|&v| v >= -tol)
                    && x.iter().skip(k).all(|&v| v >= lo - tol && v <= hi + tol)
            }
            _ => true,
        }
    }

    /// `argmin_z g(z) + ||z - v||^2 / (2 lambda)`.
    pub fn prox(&self, v: &DVector<f64>, lambda: f64) -> DVector<f64> {
        debug_assert!(lambda > 0.0);
        match self {
            Self::SimplexBox { linear, simplex_dim, lo, hi } => {
                let shifted = v - linear * lambda;
                let k = *simplex_dim;
                let z = project_simplex(&shifted.rows(0, k).into_owned());
                let mut out = shifted;
                out.rows_mut(0, k).copy_from(&z);
                for i in k..out.len() {
                    out[i] = out[i].clamp(*lo, *hi);
                }
                out
            }
            Self::L1 { weight } => v.map(|x| crate::outer::soft_threshold(x, lambda * weight)),
            Self::Ridge { weight } => v / (1.0 + lambda * weight),
        }
    }

    /// A feasible point (the simplex barycentre with the box midpoint), used as a default start.
    pub fn feasible_point(&self, p: usize) -> DVector<f64> {
        match self {
            Self::SimplexBox { simplex_dim, lo, hi, .. } => {
                let k = *simplex_dim;
                DVector::from_fn(p, |i, _| if i < k { 1.0 / k as f64 } else { 0.5 * (lo + hi) })
            }
            _ => DVector::zeros(p),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::SimplexBox { .. } => "simplex-box",
            Self::L1 { .. } => "l1",
            Self::Ridge { .. } => "ridge",
        }
    }
}
