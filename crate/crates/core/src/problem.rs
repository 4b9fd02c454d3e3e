//! Problem representation: per-sample oracles, the outer function, an optional
//! regularizer and the smoothness/variance constants.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{LinearMap, SparseVector};
use crate::outer::OuterFunction;
use crate::regularizer::Regularizer;

/// Batches at least this large are evaluated on the rayon pool.
const PARALLEL_MIN_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    /// Finite sum over samples `0..n`.
    Finite(usize),
    /// Expectation; samples are identified by seeds.
    Expectation,
}

/// Jacobian of a single sample, `q x p`.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleJacobian {
    Dense(DMatrix<f64>),
    /// Rank-one Jacobian `coeff * row^T`.
    Outer { coeff: DVector<f64>, row: SparseVector },
}

impl SampleJacobian {
    /// `out += alpha * J d`
    pub fn apply_into(&self, alpha: f64, d: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            Self::Dense(m) => out.gemv(alpha, m, d, 1.0),
            Self::Outer { coeff, row } => out.axpy(alpha * row.dot(d), coeff, 1.0),
        }
    }

    /// `out += alpha * J^T u`
    pub fn adjoint_into(&self, alpha: f64, u: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            Self::Dense(m) => out.gemv_tr(alpha, m, u, 1.0),
            Self::Outer { coeff, row } => row.axpy_into(alpha * coeff.dot(u), out),
        }
    }

    /// `out += alpha * J`
    pub fn add_to_dense(&self, alpha: f64, out: &mut DMatrix<f64>) {
        match self {
            Self::Dense(m) => *out += m * alpha,
            Self::Outer { coeff, row } => {
                for (c, v) in row.iter() {
                    let scale = alpha * v;
                    for r in 0..coeff.len() {
                        out[(r, c)] += scale * coeff[r];
                    }
                }
            }
        }
    }

    pub fn to_dense(&self, q: usize, p: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(q, p);
        self.add_to_dense(1.0, &mut out);
        out
    }

    /// Cost of one product with this Jacobian, in multiply-adds.
    pub(crate) fn product_cost(&self) -> usize {
        match self {
            Self::Dense(m) => m.len(),
            Self::Outer { coeff, row } => coeff.len() + row.nnz(),
        }
    }
}

/// Per-sample oracles `F(x, xi)` and `F'(x, xi)`.
///
/// Implementations must be pure: repeated calls with the same `(x, sample)` return
/// bit-identical results, and calls may happen concurrently from several threads.
/// In finite-sum mode `sample` is an index in `0..n`; in expectation mode it is a seed.
pub trait SampleOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn range(&self) -> usize;
    fn count(&self) -> SampleCount;
    fn value(&self, x: &DVector<f64>, sample: usize) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>, sample: usize) -> SampleJacobian;

    fn value_and_jacobian(&self, x: &DVector<f64>, sample: usize) -> (DVector<f64>, SampleJacobian) {
        (self.value(x, sample), self.jacobian(x, sample))
    }
}

/// Smoothness and variance constants. `certified` is false when any of them was
/// estimated by sampling rather than derived analytically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub m_phi: f64,
    pub l_f: f64,
    pub sigma_f: f64,
    pub sigma_d: f64,
    pub m_f: Option<f64>,
    pub certified: bool,
}

impl Default for ProblemConstants {
    fn default() -> Self {
        Self { m_phi: 0.0, l_f: 0.0, sigma_f: 0.0, sigma_d: 0.0, m_f: None, certified: true }
    }
}

/// `min_x phi(F(x)) + g(x)` with `F` an average (or expectation) of sample maps.
///
/// Holds the oracle-call counters: one unit per sample value and one per sample
/// Jacobian evaluated through this handle.
pub struct CompositionProblem {
    oracle: Arc<dyn SampleOracle>,
    pub outer: OuterFunction,
    pub regularizer: Option<Regularizer>,
    pub constants: ProblemConstants,
    f_calls: AtomicU64,
    j_calls: AtomicU64,
}

impl std::fmt::Debug for CompositionProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositionProblem")
            .field("p", &self.dim())
            .field("q", &self.range())
            .field("count", &self.count())
            .field("outer", &self.outer)
            .field("regularizer", &self.regularizer)
            .field("constants", &self.constants)
            .finish()
    }
}

impl CompositionProblem {
    /// `M_phi` defaults to the Lipschitz constant of `outer` (0 when it has none).
    pub fn new<O: SampleOracle + 'static>(oracle: O, outer: OuterFunction) -> Self {
        let q = oracle.range();
        let constants = ProblemConstants { m_phi: outer.lipschitz(q).unwrap_or(0.0), ..Default::default() };
        Self {
            oracle: Arc::new(oracle),
            outer,
            regularizer: None,
            constants,
            f_calls: AtomicU64::new(0),
            j_calls: AtomicU64::new(0),
        }
    }

    pub fn with_regularizer(mut self, g: Regularizer) -> Self {
        self.regularizer = Some(g);
        self
    }

    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    pub fn range(&self) -> usize {
        self.oracle.range()
    }

    pub fn count(&self) -> SampleCount {
        self.oracle.count()
    }

    /// Sample count in finite-sum mode.
    pub fn n(&self) -> Option<usize> {
        match self.count() {
            SampleCount::Finite(n) => Some(n),
            SampleCount::Expectation => None,
        }
    }

    pub fn require_finite(&self, what: &str) -> Result<usize> {
        self.n()
            .ok_or_else(|| Error::Unsupported(format!("{what} requires a finite-sum problem")))
    }

    pub fn sample_value(&self, x: &DVector<f64>, sample: usize) -> DVector<f64> {
        self.f_calls.fetch_add(1, Ordering::Relaxed);
        self.oracle.value(x, sample)
    }

    pub fn sample_jacobian(&self, x: &DVector<f64>, sample: usize) -> SampleJacobian {
        self.j_calls.fetch_add(1, Ordering::Relaxed);
        self.oracle.jacobian(x, sample)
    }

    pub fn sample_value_and_jacobian(&self, x: &DVector<f64>, sample: usize) -> (DVector<f64>, SampleJacobian) {
        self.f_calls.fetch_add(1, Ordering::Relaxed);
        self.j_calls.fetch_add(1, Ordering::Relaxed);
        self.oracle.value_and_jacobian(x, sample)
    }

    /// Cumulative `(function, Jacobian)` oracle calls made through this handle.
    pub fn counters(&self) -> (u64, u64) {
        (self.f_calls.load(Ordering::Relaxed), self.j_calls.load(Ordering::Relaxed))
    }

    pub fn reset_counters(&self) {
        self.f_calls.store(0, Ordering::Relaxed);
        self.j_calls.store(0, Ordering::Relaxed);
    }

    /// Sample values over `batch`, in batch order.
    pub(crate) fn values_over(&self, x: &DVector<f64>, batch: &[usize]) -> Vec<DVector<f64>> {
        if batch.len() >= PARALLEL_MIN_BATCH {
            batch.par_iter().map(|&s| self.sample_value(x, s)).collect()
        } else {
            batch.iter().map(|&s| self.sample_value(x, s)).collect()
        }
    }

    pub(crate) fn jacobians_over(&self, x: &DVector<f64>, batch: &[usize]) -> Vec<SampleJacobian> {
        if batch.len() >= PARALLEL_MIN_BATCH {
            batch.par_iter().map(|&s| self.sample_jacobian(x, s)).collect()
        } else {
            batch.iter().map(|&s| self.sample_jacobian(x, s)).collect()
        }
    }

    /// Batch average of sample values, reduced in batch order.
    pub fn average_value(&self, x: &DVector<f64>, batch: &[usize]) -> DVector<f64> {
        assert!(!batch.is_empty(), "empty batch");
        let parts = self.values_over(x, batch);
        let mut acc = DVector::zeros(self.range());
        for v in &parts {
            acc += v;
        }
        acc / batch.len() as f64
    }

    /// Dense batch average of sample Jacobians, reduced in batch order.
    pub fn average_jacobian(&self, x: &DVector<f64>, batch: &[usize]) -> DMatrix<f64> {
        assert!(!batch.is_empty(), "empty batch");
        let parts = self.jacobians_over(x, batch);
        dense_average(&parts, self.range(), self.dim())
    }

    /// Exact `F(x)` by a full pass (finite-sum only).
    pub fn exact_value(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.require_finite("exact evaluation of F")?;
        let batch: Vec<usize> = (0..n).collect();
        Ok(self.average_value(x, &batch))
    }

    /// Exact dense `F'(x)` by a full pass (finite-sum only).
    pub fn exact_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.require_finite("exact evaluation of F'")?;
        let batch: Vec<usize> = (0..n).collect();
        Ok(self.average_jacobian(x, &batch))
    }

    /// `g(x)`, zero without a regularizer.
    pub fn regularizer_value(&self, x: &DVector<f64>) -> f64 {
        self.regularizer.as_ref().map_or(0.0, |g| g.value(x))
    }
}

pub(crate) fn dense_average(parts: &[SampleJacobian], q: usize, p: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(q, p);
    for j in parts {
        j.add_to_dense(1.0, &mut acc);
    }
    acc / parts.len() as f64
}

/// Batch-averaged Jacobian kept as the list of sample Jacobians.
#[derive(Debug, Clone)]
pub struct SampledJacobian {
    parts: Vec<SampleJacobian>,
    q: usize,
    p: usize,
}

impl SampledJacobian {
    pub fn new(parts: Vec<SampleJacobian>, q: usize, p: usize) -> Self {
        assert!(!parts.is_empty());
        Self { parts, q, p }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub(crate) fn product_cost(&self) -> usize {
        self.parts.iter().map(|j| j.product_cost()).sum()
    }
}

impl LinearMap for SampledJacobian {
    fn nrows(&self) -> usize {
        self.q
    }

    fn ncols(&self) -> usize {
        self.p
    }

    fn apply(&self, d: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.q);
        for j in &self.parts {
            j.apply_into(1.0, d, &mut out);
        }
        out / self.parts.len() as f64
    }

    fn apply_adjoint(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.p);
        for j in &self.parts {
            j.adjoint_into(1.0, u, &mut out);
        }
        out / self.parts.len() as f64
    }

    fn to_dense(&self) -> DMatrix<f64> {
        dense_average(&self.parts, self.q, self.p)
    }
}

/// Affine samples `F_i(x) = A_i x + b_i` over a finite sum. Handy for toy problems.
#[derive(Debug, Clone)]
pub struct AffineOracle {
    mats: Vec<DMatrix<f64>>,
    offsets: Vec<DVector<f64>>,
}

impl AffineOracle {
    pub fn new(mats: Vec<DMatrix<f64>>, offsets: Vec<DVector<f64>>) -> Self {
        assert!(!mats.is_empty() && mats.len() == offsets.len());
        let (q, p) = mats[0].shape();
        assert!(mats.iter().all(|m| m.shape() == (q, p)));
        assert!(offsets.iter().all(|b| b.len() == q));
        Self { mats, offsets }
    }

    /// Single sample `F(x) = x - a`.
    pub fn shift(a: DVector<f64>) -> Self {
        let p = a.len();
        Self::new(vec![DMatrix::identity(p, p)], vec![-a])
    }
}

impl SampleOracle for AffineOracle {
    fn dim(&self) -> usize {
        self.mats[0].ncols()
    }

    fn range(&self) -> usize {
        self.mats[0].nrows()
    }

    fn count(&self) -> SampleCount {
        SampleCount::Finite(self.mats.len())
    }

    fn value(&self, x: &DVector<f64>, sample: usize) -> DVector<f64> {
        &self.mats[sample] * x + &self.offsets[sample]
    }

    fn jacobian(&self, _x: &DVector<f64>, sample: usize) -> SampleJacobian {
        SampleJacobian::Dense(self.mats[sample].clone())
    }
}

type ValueFn = dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync;

/// Oracle built from closures returning dense values and Jacobians.
pub struct FnOracle {
    p: usize,
    q: usize,
    count: SampleCount,
    value: Box<ValueFn>,
    jacobian: Box<JacobianFn>,
}

impl FnOracle {
    pub fn new<V, J>(p: usize, q: usize, count: SampleCount, value: V, jacobian: J) -> Self
    where
        V: Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self { p, q, count, value: Box::new(value), jacobian: Box::new(jacobian) }
    }
}

impl SampleOracle for FnOracle {
    fn dim(&self) -> usize {
        self.p
    }

    fn range(&self) -> usize {
        self.q
    }

    fn count(&self) -> SampleCount {
        self.count
    }

    fn value(&self, x: &DVector<f64>, sample: usize) -> DVector<f64> {
        (self.value)(x, sample)
    }

    fn jacobian(&self, x: &DVector<f64>, sample: usize) -> SampleJacobian {
        SampleJacobian::Dense((self.jacobian)(x, sample))
    }
}
