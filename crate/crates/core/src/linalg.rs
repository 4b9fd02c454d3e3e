//! Linear maps, sparse rows and norm estimation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A linear map `R^ncols -> R^nrows` exposing forward and adjoint products.
pub trait LinearMap {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `A d`
    fn apply(&self, d: &DVector<f64>) -> DVector<f64>;

    /// `A^T u`
    fn apply_adjoint(&self, u: &DVector<f64>) -> DVector<f64>;

    fn to_dense(&self) -> DMatrix<f64>;
}

impl LinearMap for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, d: &DVector<f64>) -> DVector<f64> {
        self * d
    }

    fn apply_adjoint(&self, u: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(u)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// Sparse vector with strictly ascending indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a sparse vector. Indices must be strictly ascending and `< dim`.
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.last().map_or(true, |&i| i < dim));
        Self { dim, indices, values }
    }

    pub fn from_dense(v: &[f64]) -> Self {
        let (indices, values) = v
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, x)| (i, *x))
            .unzip();
        Self { dim: v.len(), indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, x: &DVector<f64>) -> f64 {
        self.iter().map(|(i, v)| v * x[i]).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `out += alpha * self`
    pub fn axpy_into(&self, alpha: f64, out: &mut DVector<f64>) {
        for (i, v) in self.iter() {
            out[i] += alpha * v;
        }
    }

    /// Returns a copy with the dimension grown to `dim` and an extra entry appended.
    pub fn with_appended(&self, dim: usize, index: usize, value: f64) -> Self {
        assert!(dim >= self.dim && index >= self.dim && index < dim);
        let mut indices = self.indices.clone();
        let mut values = self.values.clone();
        indices.push(index);
        values.push(value);
        Self { dim, indices, values }
    }

    /// Returns a copy declared in a (not smaller) ambient dimension.
    pub fn with_dim(&self, dim: usize) -> Self {
        assert!(dim >= self.dim);
        Self { dim, ..self.clone() }
    }

    pub fn to_dense(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.axpy_into(1.0, &mut out);
        out
    }
}

/// Largest eigenvalue of `A^T A` (= `||A||^2`) by power iteration on the smaller Gram side.
///
/// Uses a fixed-seed start vector so repeated calls are bit-identical. Stops once the
/// Rayleigh quotient changes by less than `rel_tol` in relative terms.
pub fn gram_spectral_norm<A: LinearMap + ?Sized>(a: &A, rel_tol: f64, max_iter: usize) -> f64 {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_9a11);
    // iterate in whichever space is smaller
    let rows_side = m <= n;
    let dim = if rows_side { m } else { n };
    let mut v = DVector::from_fn(dim, |_, _| rng.random::<f64>() + 0.5);
    let nv = v.norm();
    v /= nv;
    let mut lambda = 0.0_f64;
    for _ in 0..max_iter {
        let w = if rows_side {
            a.apply(&a.apply_adjoint(&v))
        } else {
            a.apply_adjoint(&a.apply(&v))
        };
        let next = v.dot(&w);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return next.max(lambda);
        }
        lambda = next;
    }
    lambda
}

/// Exact spectral norm of a dense matrix through its singular values.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, s| acc.max(*s))
}
