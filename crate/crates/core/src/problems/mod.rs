//! Benchmark problems: nonconvex classification losses and smoothed CVaR allocation.

pub mod cvar;
pub mod data;
pub mod nlse;

pub use cvar::{cvar_component, cvar_hinge_component, make_cvar_problem, CvarOracle, CvarParams};
pub use data::{
    bootstrap_resample, gen_synthetic_classification, gen_synthetic_returns, ClassificationDataset, FactorModel,
    ReturnsDataset, Resample,
};
pub use nlse::{make_nlse_problem, nlse_component, NlseLoss, NlseOracle};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::estimators::sample_batch;
use crate::problem::{CompositionProblem, ProblemConstants};

/// Sample estimates of `sigma_F` and `sigma_D` at the points `xs`: the largest
/// per-sample spread `sqrt(mean ||F_i(x) - F(x)||^2)` (Frobenius norm for Jacobians)
/// over `probes` samples drawn at each point. The returned constants are marked
/// non-certified. Oracle calls made here are charged to the problem's counters.
pub fn estimate_variances(problem: &CompositionProblem, xs: &[DVector<f64>], probes: usize, seed: u64) -> Result<ProblemConstants> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (q, p) = (problem.range(), problem.dim());
    let (mut sigma_f, mut sigma_d) = (0.0f64, 0.0f64);
    for x in xs {
        let batch = sample_batch(problem.count(), probes.max(2), &mut rng)?;
        let vals: Vec<DVector<f64>> = batch.iter().map(|&s| problem.sample_value(x, s)).collect();
        let jacs: Vec<DMatrix<f64>> = batch.iter().map(|&s| problem.sample_jacobian(x, s).to_dense(q, p)).collect();
        if batch.len() < 2 {
            continue;
        }
        let k = batch.len() as f64;
        let fbar = vals.iter().fold(DVector::zeros(q), |acc, v| acc + v) / k;
        let jbar = jacs.iter().fold(DMatrix::zeros(q, p), |acc, j| acc + j) / k;
        let vf = vals.iter().map(|v| (v - &fbar).norm_squared()).sum::<f64>() / (k - 1.0);
        let vd = jacs.iter().map(|j| (j - &jbar).norm_squared()).sum::<f64>() / (k - 1.0);
        sigma_f = sigma_f.max(vf.sqrt());
        sigma_d = sigma_d.max(vd.sqrt());
    }
    Ok(ProblemConstants { sigma_f, sigma_d, certified: false, ..problem.constants })
}
