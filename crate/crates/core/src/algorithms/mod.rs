//! Outer drivers: deterministic Gauss-Newton (GN), mini-batch SGN and SARAH-based SGN2.

mod trace;

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::evaluate_objective;
use crate::error::{Error, Result};
use crate::estimators::{
    clamp_batch, minibatch_estimate, sample_batch, sarah_update, schedule_minibatch_expectation,
    schedule_minibatch_finitesum, schedule_sarah, BatchSchedule, Estimate, JacobianForm, ScheduleConstants,
};
use crate::problem::{CompositionProblem, SampleCount};
use crate::subsolver::{self, ProxLinearSubproblem, SolverKind, SolverOptions};

pub use trace::{rate_envelope, relative_residual, select_output, RunTrace, StepSnapshot, TraceRecord};

/// Stream offset separating the output-iterate draw from the batch sampling.
const OUTPUT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Gn,
    Sgn,
    Sgn2,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gn" => Ok(Self::Gn),
            "sgn" => Ok(Self::Sgn),
            "sgn2" => Ok(Self::Sgn2),
            other => Err(Error::InvalidParameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsolverConfig {
    pub kind: SolverKind,
    /// `None` uses `1e-8 * max(1, ||F~||)`.
    pub tol: Option<f64>,
    pub k_max: usize,
    /// Abort the run when a subproblem hits `k_max`; otherwise continue with the best iterate.
    pub strict: bool,
}

impl Default for SubsolverConfig {
    fn default() -> Self {
        Self { kind: SolverKind::Adpg, tol: None, k_max: subsolver::DEFAULT_K_MAX, strict: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Prox parameter `M`.
    pub m: f64,
    /// `T` for GN/SGN, number of epochs `S` for SGN2.
    pub iterations: usize,
    /// Inner-loop length `m` of SGN2 (overridden by a SARAH schedule).
    pub inner: usize,
    pub schedule: BatchSchedule,
    /// SGN2 snapshot sizes `(b_s, b^_s)`; `None` means the full data set.
    pub snapshot: Option<(usize, usize)>,
    pub subsolver: SubsolverConfig,
    pub seed: u64,
    /// Target accuracy used by the theoretical schedules.
    pub epsilon: f64,
    pub beta_d: f64,
    /// Optimal value estimate, needed by the SARAH schedule.
    pub psi_star: Option<f64>,
    /// Evaluate the exact objective every `k` records (0 disables it); the final record
    /// is always evaluated when enabled.
    pub objective_every: usize,
    pub keep_iterates: bool,
    pub keep_last_step: bool,
    pub jacobian_form: JacobianForm,
    pub timing: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, m: f64, iterations: usize, schedule: BatchSchedule) -> Self {
        Self {
            algorithm,
            m,
            iterations,
            inner: 0,
            schedule,
            snapshot: None,
            subsolver: SubsolverConfig::default(),
            seed: 0,
            epsilon: 1e-3,
            beta_d: 1.0,
            psi_star: None,
            objective_every: 1,
            keep_iterates: false,
            keep_last_step: false,
            jacobian_form: JacobianForm::Auto,
            timing: false,
        }
    }

    /// Checks the configuration against a problem with `n` samples. Returns notes about
    /// batch sizes that will be clamped to `n`.
    pub fn validate(&self, count: SampleCount, has_regularizer: bool) -> Result<Vec<String>> {
        if !(self.m > 0.0) {
            return Err(Error::InvalidParameter(format!("M must be positive, got {}", self.m)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iteration budget must be at least 1".into()));
        }
        if !(self.beta_d > 0.0) {
            return Err(Error::InvalidParameter("beta_d must be positive".into()));
        }
        if has_regularizer && self.subsolver.kind == SolverKind::Adpg {
            return Err(Error::InvalidConfiguration(
                "problems with a regularizer need the primal-dual subsolver".into(),
            ));
        }
        let n = match count {
            SampleCount::Finite(n) => Some(n),
            SampleCount::Expectation => None,
        };
        if self.algorithm == Algorithm::Gn && n.is_none() {
            return Err(Error::Unsupported("GN needs a finite-sum problem".into()));
        }
        let mut notes = Vec::new();
        let mut check = |what: &str, b: usize| -> Result<()> {
            if b == 0 {
                return Err(Error::InvalidParameter(format!("{what} must be at least 1")));
            }
            if let Some(n) = n {
                if b > n {
                    notes.push(format!("{what} = {b} clamped to n = {n}"));
                }
            }
            Ok(())
        };
        match self.schedule {
            BatchSchedule::Fixed { b, bhat } => {
                check("function batch", b)?;
                check("Jacobian batch", bhat)?;
            }
            BatchSchedule::Sarah(_) if self.algorithm != Algorithm::Sgn2 => {
                return Err(Error::InvalidConfiguration("the SARAH schedule applies to SGN2 only".into()));
            }
            BatchSchedule::FiniteSum(_) if n.is_none() => {
                return Err(Error::InvalidConfiguration("the adaptive schedule needs a finite sum".into()));
            }
            _ => {}
        }
        if self.algorithm == Algorithm::Sgn2 {
            match self.snapshot {
                Some((bs, bhs)) => {
                    check("snapshot function batch", bs)?;
                    check("snapshot Jacobian batch", bhs)?;
                }
                None if n.is_none() && !matches!(self.schedule, BatchSchedule::Sarah(_)) => {
                    return Err(Error::InvalidConfiguration(
                        "expectation problems need explicit snapshot batch sizes".into(),
                    ));
                }
                None => {}
            }
        }
        Ok(notes)
    }
}

/// Bookkeeping shared by the drivers.
struct Driver<'a> {
    problem: &'a CompositionProblem,
    cfg: &'a RunConfig,
    n: Option<usize>,
    start: Instant,
    records: Vec<TraceRecord>,
    iterates: Option<Vec<DVector<f64>>>,
    oracle_f: u64,
    oracle_j: u64,
    warm_u: Option<DVector<f64>>,
    output_index: usize,
    output: Option<DVector<f64>>,
    last_step: Option<StepSnapshot>,
    unconverged: usize,
    total_steps: usize,
}

impl<'a> Driver<'a> {
    fn new(problem: &'a CompositionProblem, cfg: &'a RunConfig, total_steps: usize) -> Result<Self> {
        for note in cfg.validate(problem.count(), problem.regularizer.is_some())? {
            log::warn!("{note}");
        }
        let mut out_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ OUTPUT_STREAM);
        Ok(Self {
            problem,
            cfg,
            n: problem.n(),
            start: Instant::now(),
            records: Vec::with_capacity(total_steps + 1),
            iterates: cfg.keep_iterates.then(Vec::new),
            oracle_f: 0,
            oracle_j: 0,
            warm_u: None,
            output_index: out_rng.random_range(0..=total_steps),
            output: None,
            last_step: None,
            unconverged: 0,
            total_steps,
        })
    }

    fn record(&mut self, x: &DVector<f64>) -> Result<()> {
        let iter = self.records.len();
        let every = self.cfg.objective_every;
        let psi = if every > 0 && (iter % every == 0 || iter == self.total_steps) {
            Some(evaluate_objective(self.problem, x)?)
        } else {
            None
        };
        self.records.push(TraceRecord {
            iter,
            epochs: self.n.map(|n| self.oracle_f as f64 / n as f64),
            oracle_f: self.oracle_f,
            oracle_j: self.oracle_j,
            psi,
            gnorm_sq: None,
            subsolver_iters: 0,
            wall_ms: self.cfg.timing.then(|| self.start.elapsed().as_secs_f64() * 1e3),
        });
        if iter == self.output_index {
            self.output = Some(x.clone());
        }
        if let Some(its) = self.iterates.as_mut() {
            its.push(x.clone());
        }
        Ok(())
    }

    /// Runs an estimator and charges its oracle calls to the trace counters.
    fn charge(&mut self, f: impl FnOnce() -> Result<Estimate>) -> Result<Estimate> {
        let (f0, j0) = self.problem.counters();
        let est = f()?;
        let (f1, j1) = self.problem.counters();
        self.oracle_f += f1 - f0;
        self.oracle_j += j1 - j0;
        Ok(est)
    }

    /// One prox-linear step from `x` with the given estimates.
    fn step(&mut self, x: &DVector<f64>, est: &Estimate) -> Result<DVector<f64>> {
        let sub = ProxLinearSubproblem::new(
            &est.f_tilde,
            &est.j_tilde,
            self.cfg.m,
            &self.problem.outer,
            self.problem.regularizer.as_ref(),
            x,
        )?;
        let opts = SolverOptions { kind: self.cfg.subsolver.kind, tol: self.cfg.subsolver.tol, k_max: self.cfg.subsolver.k_max };
        let sol = subsolver::solve(&sub, &opts, self.warm_u.as_ref())?;
        if !sol.converged {
            if self.cfg.subsolver.strict {
                return Err(Error::NonConvergence { iterations: sol.iterations, residual: sol.residual });
            }
            log::warn!(
                "subproblem at step {} stopped after {} iterations with residual {:e}",
                self.records.len() - 1,
                sol.iterations,
                sol.residual
            );
            self.unconverged += 1;
        }
        let next = x + &sol.d_star;
        let rec = self.records.last_mut().expect("initial record exists");
        rec.gnorm_sq = Some(self.cfg.m * self.cfg.m * sol.d_star.norm_squared());
        rec.subsolver_iters = sol.iterations;
        if self.cfg.keep_last_step {
            self.last_step = Some(StepSnapshot {
                x: x.clone(),
                next: next.clone(),
                f_tilde: est.f_tilde.clone(),
                j_tilde: crate::linalg::LinearMap::to_dense(&est.j_tilde),
                u_star: sol.u_star.clone(),
            });
        }
        self.warm_u = Some(sol.u_star);
        Ok(next)
    }

    fn finish(self, final_iterate: DVector<f64>) -> RunTrace {
        RunTrace {
            records: self.records,
            output_iterate: self.output.unwrap_or_else(|| final_iterate.clone()),
            final_iterate,
            output_index: self.output_index,
            iterates: self.iterates,
            last_step: self.last_step,
            unconverged_steps: self.unconverged,
        }
    }
}

/// Runs the algorithm selected in `cfg`.
pub fn run(problem: &CompositionProblem, x0: &DVector<f64>, cfg: &RunConfig) -> Result<RunTrace> {
    match cfg.algorithm {
        Algorithm::Gn => run_gn(problem, x0, cfg),
        Algorithm::Sgn => run_sgn(problem, x0, cfg),
        Algorithm::Sgn2 => run_sgn2(problem, x0, cfg),
    }
}

fn check_start(problem: &CompositionProblem, x0: &DVector<f64>) -> Result<()> {
    if x0.len() != problem.dim() {
        return Err(Error::InvalidParameter(format!(
            "starting point has {} entries, problem dimension is {}",
            x0.len(),
            problem.dim()
        )));
    }
    Ok(())
}

/// Deterministic Gauss-Newton: `x_{t+1} = T_M(x_t)` with exact `F`, `F'`. The batch
/// schedule in `cfg` is ignored.
pub fn run_gn(problem: &CompositionProblem, x0: &DVector<f64>, cfg: &RunConfig) -> Result<RunTrace> {
    check_start(problem, x0)?;
    let n = problem.require_finite("GN")?;
    let full: Vec<usize> = (0..n).collect();
    let mut drv = Driver::new(problem, cfg, cfg.iterations)?;
    let mut x = x0.clone();
    drv.record(&x)?;
    for _ in 0..cfg.iterations {
        let est = drv.charge(|| minibatch_estimate(problem, &x, &full, &full, cfg.jacobian_form))?;
        x = drv.step(&x, &est)?;
        drv.record(&x)?;
    }
    Ok(drv.finish(x))
}

/// Mini-batch sizes for SGN at iteration `t`.
fn sgn_sizes(
    problem: &CompositionProblem,
    cfg: &RunConfig,
    t: usize,
    step_norm: f64,
) -> Result<(usize, usize)> {
    let n = problem.n();
    let consts = ScheduleConstants::new(cfg.m, &problem.constants);
    match cfg.schedule {
        BatchSchedule::Fixed { b, bhat } => Ok((clamp_batch(b as f64, n), clamp_batch(bhat as f64, n))),
        BatchSchedule::Expectation(p) => schedule_minibatch_expectation(&consts, &p, n),
        BatchSchedule::FiniteSum(p) => {
            let n = problem.require_finite("the adaptive schedule")?;
            schedule_minibatch_finitesum(&consts, &p, t, step_norm, problem.dim(), problem.range(), n)
        }
        BatchSchedule::Sarah(_) => {
            Err(Error::InvalidConfiguration("the SARAH schedule applies to SGN2 only".into()))
        }
    }
}

/// SGN: prox-linear steps on independent mini-batch estimates of `F` and `F'`.
pub fn run_sgn(problem: &CompositionProblem, x0: &DVector<f64>, cfg: &RunConfig) -> Result<RunTrace> {
    check_start(problem, x0)?;
    let mut drv = Driver::new(problem, cfg, cfg.iterations)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let count = problem.count();
    let mut x = x0.clone();
    let mut step_norm = 0.0;
    drv.record(&x)?;
    for t in 0..cfg.iterations {
        let (b, bhat) = sgn_sizes(problem, cfg, t, step_norm)?;
        let batch_f = sample_batch(count, b, &mut rng)?;
        let batch_j = sample_batch(count, bhat, &mut rng)?;
        let est = drv.charge(|| minibatch_estimate(problem, &x, &batch_f, &batch_j, cfg.jacobian_form))?;
        let next = drv.step(&x, &est)?;
        step_norm = (&next - &x).norm();
        x = next;
        drv.record(&x)?;
    }
    Ok(drv.finish(x))
}

/// SGN2: each epoch takes a mini-batch snapshot at `x~`, one prox-linear step, then
/// `m` steps on SARAH estimates.
pub fn run_sgn2(problem: &CompositionProblem, x0: &DVector<f64>, cfg: &RunConfig) -> Result<RunTrace> {
    check_start(problem, x0)?;
    let n = problem.n();
    let count = problem.count();
    let consts = ScheduleConstants::new(cfg.m, &problem.constants);

    let sarah = match cfg.schedule {
        BatchSchedule::Sarah(p) => {
            let psi_star = cfg.psi_star.ok_or_else(|| {
                Error::InvalidConfiguration("the SARAH schedule needs an optimal-value estimate".into())
            })?;
            let gap = evaluate_objective(problem, x0)? - psi_star;
            Some((p, gap))
        }
        _ => None,
    };
    let inner = match sarah {
        Some((p, gap)) => schedule_sarah(&consts, &p, gap, 0, n)?.m,
        None => cfg.inner,
    };
    let snapshot_sizes = || -> Result<(usize, usize)> {
        if let Some((p, gap)) = sarah {
            let s = schedule_sarah(&consts, &p, gap, 0, n)?;
            return Ok((s.b_s, s.bhat_s));
        }
        match (cfg.snapshot, n) {
            (Some((b, bh)), n) => Ok((clamp_batch(b as f64, n), clamp_batch(bh as f64, n))),
            (None, Some(n)) => Ok((n, n)),
            (None, None) => Err(Error::InvalidConfiguration(
                "expectation problems need explicit snapshot batch sizes".into(),
            )),
        }
    };
    let inner_sizes = |t: usize| -> Result<(usize, usize)> {
        match (sarah, cfg.schedule) {
            (Some((p, gap)), _) => {
                let s = schedule_sarah(&consts, &p, gap, t, n)?;
                Ok((s.b_t, s.bhat_t))
            }
            (None, BatchSchedule::Fixed { b, bhat }) => Ok((clamp_batch(b as f64, n), clamp_batch(bhat as f64, n))),
            (None, BatchSchedule::Expectation(p)) => schedule_minibatch_expectation(&consts, &p, n),
            (None, _) => Err(Error::InvalidConfiguration(
                "SGN2 inner batches need a fixed, expectation or SARAH schedule".into(),
            )),
        }
    };

    let total = cfg.iterations * (inner + 1);
    let mut drv = Driver::new(problem, cfg, total)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.clone();
    drv.record(&x)?;
    for _ in 0..cfg.iterations {
        let (bs, bhs) = snapshot_sizes()?;
        let batch_f = sample_batch(count, bs, &mut rng)?;
        let batch_j = sample_batch(count, bhs, &mut rng)?;
        let mut est = drv.charge(|| minibatch_estimate(problem, &x, &batch_f, &batch_j, cfg.jacobian_form))?;
        let mut x_prev = x.clone();
        x = drv.step(&x, &est)?;
        drv.record(&x)?;
        for t in 1..=inner {
            let (b, bhat) = inner_sizes(t)?;
            let batch_f = sample_batch(count, b, &mut rng)?;
            let batch_j = sample_batch(count, bhat, &mut rng)?;
            est = drv.charge(|| sarah_update(problem, &est, &x_prev, &x, &batch_f, &batch_j))?;
            x_prev = x.clone();
            x = drv.step(&x, &est)?;
            drv.record(&x)?;
        }
    }
    Ok(drv.finish(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outer::OuterFunction;
    use crate::problem::AffineOracle;
    use nalgebra::DMatrix;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn gn_config(iters: usize, m: f64) -> RunConfig {
        let mut cfg = RunConfig::new(Algorithm::Gn, m, iters, BatchSchedule::Fixed { b: 1, bhat: 1 });
        cfg.subsolver.tol = Some(1e-13);
        cfg
    }

    #[test]
    fn quadratic_toy_halves_the_distance() {
        // 0.5 ||x - a||^2 with M = 1: x_{t+1} = (x_t + a) / 2
        let a = v(&[1.0, -2.0]);
        let prob = CompositionProblem::new(AffineOracle::shift(a.clone()), OuterFunction::half_squared());
        let tr = run_gn(&prob, &v(&[0.0, 0.0]), &gn_config(6, 1.0)).unwrap();
        assert_eq!(tr.records.len(), 7);
        let g: Vec<f64> = tr.records.iter().filter_map(|r| r.gnorm_sq).collect();
        for w in g.windows(2) {
            assert!((w[1] / w[0] - 0.25).abs() < 1e-9);
        }
        let expected = &a * (1.0 - 0.5_f64.powi(6));
        assert!((tr.final_iterate - expected).norm() < 1e-9);
    }

    #[test]
    fn stationary_start_stays_put() {
        let a = v(&[0.5]);
        let prob = CompositionProblem::new(AffineOracle::shift(a.clone()), OuterFunction::l2());
        let tr = run_gn(&prob, &a, &gn_config(3, 1.0)).unwrap();
        assert_eq!(tr.final_iterate, a);
    }

    #[test]
    fn absolute_value_soft_threshold_step() {
        let prob = CompositionProblem::new(AffineOracle::shift(v(&[0.0])), OuterFunction::l1());
        let tr = run_gn(&prob, &v(&[0.5]), &gn_config(1, 1.0)).unwrap();
        assert!(tr.final_iterate[0].abs() < 1e-9);
    }

    #[test]
    fn gn_charges_n_per_iteration() {
        let mats = (0..3).map(|i| DMatrix::from_element(1, 1, 1.0 + i as f64)).collect();
        let offs = (0..3).map(|_| v(&[1.0])).collect();
        let prob = CompositionProblem::new(AffineOracle::new(mats, offs), OuterFunction::half_squared());
        let tr = run_gn(&prob, &v(&[0.0]), &gn_config(4, 1.0)).unwrap();
        let oracle: Vec<u64> = tr.records.iter().map(|r| r.oracle_f).collect();
        assert_eq!(oracle, vec![0, 3, 6, 9, 12]);
        assert_eq!(tr.final_record().epochs, Some(4.0));
    }

    #[test]
    fn adpg_with_regularizer_is_rejected() {
        let cfg = gn_config(1, 1.0);
        assert!(cfg.validate(SampleCount::Finite(3), true).is_err());
    }

    #[test]
    fn large_sgn2_configuration_is_not_clamped() {
        let mut cfg = RunConfig::new(Algorithm::Sgn2, 1.0, 10, BatchSchedule::Fixed { b: 128, bhat: 64 });
        cfg.inner = 2000;
        let notes = cfg.validate(SampleCount::Finite(49_749), false).unwrap();
        assert!(notes.is_empty());
        cfg.schedule = BatchSchedule::Fixed { b: 60_000, bhat: 64 };
        assert_eq!(cfg.validate(SampleCount::Finite(49_749), false).unwrap().len(), 1);
    }
}
