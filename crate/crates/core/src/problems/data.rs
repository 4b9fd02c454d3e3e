//! Data sets for the benchmark problems, synthetic generators and bootstrap resampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::SparseVector;

/// Binary classification data: sparse rows `a_i`, labels `y_i` in {-1, +1} and offsets `b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationDataset {
    rows: Vec<SparseVector>,
    labels: Vec<f64>,
    bias: Vec<f64>,
    p: usize,
}

impl ClassificationDataset {
    /// Builds a data set with zero offsets. Rows must live in dimension `p`.
    pub fn new(rows: Vec<SparseVector>, labels: Vec<f64>, p: usize) -> Result<Self> {
        let n = rows.len();
        Self::with_bias(rows, labels, vec![0.0; n], p)
    }

    pub fn with_bias(rows: Vec<SparseVector>, labels: Vec<f64>, bias: Vec<f64>, p: usize) -> Result<Self> {
        if rows.len() != labels.len() || rows.len() != bias.len() {
            return Err(Error::InvalidInput("rows, labels and offsets differ in length".into()));
        }
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidInput(format!("label {} of row {i} is not +1 or -1", labels[i])));
        }
        if let Some(i) = rows.iter().position(|r| r.indices().last().is_some_and(|&j| j >= p)) {
            return Err(Error::InvalidInput(format!("row {i} has a feature index beyond p = {p}")));
        }
        let rows = rows.into_iter().map(|r| if r.dim() == p { r } else { r.with_dim(p) }).collect();
        Ok(Self { rows, labels, bias, p })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &SparseVector {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.bias[i]
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Appends a constant feature equal to one (an intercept column at index `p`).
    pub fn with_intercept(&self) -> Self {
        let p = self.p + 1;
        let rows = self.rows.iter().map(|r| r.with_appended(p, self.p, 1.0)).collect();
        Self { rows, labels: self.labels.clone(), bias: self.bias.clone(), p }
    }

    /// Concatenates two data sets; the dimension is the larger of the two.
    pub fn concat(&self, other: &Self) -> Self {
        let p = self.p.max(other.p);
        let rows = self.rows.iter().chain(&other.rows).map(|r| r.with_dim(p)).collect();
        let labels = self.labels.iter().chain(&other.labels).copied().collect();
        let bias = self.bias.iter().chain(&other.bias).copied().collect();
        Self { rows, labels, bias, p }
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            bias: idx.iter().map(|&i| self.bias[i]).collect(),
            p: self.p,
        }
    }
}

/// Asset-return scenarios `xi_i` (rows of an `n x p` matrix) and expected returns `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsDataset {
    scenarios: DMatrix<f64>,
    expected: DVector<f64>,
}

impl ReturnsDataset {
    pub fn new(scenarios: DMatrix<f64>, expected: DVector<f64>) -> Result<Self> {
        if scenarios.ncols() != expected.len() {
            return Err(Error::InvalidInput("expected-return vector does not match the asset count".into()));
        }
        if scenarios.iter().chain(expected.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("returns must be finite".into()));
        }
        Ok(Self { scenarios, expected })
    }

    /// Uses the scenario mean as the expected-return vector.
    pub fn from_scenarios(scenarios: DMatrix<f64>) -> Result<Self> {
        if scenarios.nrows() == 0 {
            return Err(Error::InvalidInput("no scenarios".into()));
        }
        let mean = scenarios.row_mean().transpose();
        Self::new(scenarios, mean)
    }

    pub fn n(&self) -> usize {
        self.scenarios.nrows()
    }

    pub fn p(&self) -> usize {
        self.scenarios.ncols()
    }

    pub fn scenarios(&self) -> &DMatrix<f64> {
        &self.scenarios
    }

    pub fn scenario(&self, i: usize) -> DVector<f64> {
        self.scenarios.row(i).transpose()
    }

    pub fn expected(&self) -> &DVector<f64> {
        &self.expected
    }

    fn select(&self, idx: &[usize]) -> Self {
        let scenarios = self.scenarios.select_rows(idx);
        Self { scenarios, expected: self.expected.clone() }
    }
}

/// Gaussian factor model `xi = mu + B f + e` with `f ~ N(0, I_k)` and independent
/// idiosyncratic noise `e_j ~ N(0, s_j^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub mean: DVector<f64>,
    pub loadings: DMatrix<f64>,
    pub idiosyncratic_sd: DVector<f64>,
}

impl FactorModel {
    pub const FACTORS: usize = 3;

    /// Draws a model for `p` assets: means uniform on [0, 0.1], loadings uniform on
    /// [-0.05, 0.05], and idiosyncratic deviations `0.02 + mean` so that riskier assets
    /// pay more on average.
    pub fn random<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        let mean = DVector::from_fn(p, |_, _| 0.1 * rng.random::<f64>());
        let loadings = DMatrix::from_fn(p, Self::FACTORS, |_, _| 0.1 * rng.random::<f64>() - 0.05);
        let idiosyncratic_sd = mean.map(|m| 0.02 + m);
        Self { mean, loadings, idiosyncratic_sd }
    }

    /// Standard deviation of asset `j`'s return.
    pub fn sd(&self, j: usize) -> f64 {
        (self.loadings.row(j).norm_squared() + self.idiosyncratic_sd[j].powi(2)).sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.mean.len();
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            let f = DVector::from_fn(Self::FACTORS, |_, _| StandardNormal.sample(rng));
            let common = &self.loadings * f;
            for j in 0..p {
                let e: f64 = StandardNormal.sample(rng);
                out[(i, j)] = self.mean[j] + common[j] + self.idiosyncratic_sd[j] * e;
            }
        }
        out
    }
}

/// `n` return scenarios for `p` assets from [`FactorModel::random`]; `c` is the
/// scenario mean. The model is drawn first from the same seeded stream.
pub fn gen_synthetic_returns(n: usize, p: usize, seed: u64) -> Result<ReturnsDataset> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("need n, p >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = FactorModel::random(p, &mut rng);
    ReturnsDataset::from_scenarios(model.sample(n, &mut rng))
}

/// Synthetic classification data: Gaussian rows scaled by `1/sqrt(p)`, labels from a
/// planted Gaussian direction with 10% of them flipped.
pub fn gen_synthetic_classification(n: usize, p: usize, seed: u64) -> Result<ClassificationDataset> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("need n, p >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let scale = 1.0 / (p as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a: Vec<f64> = (0..p)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        let margin: f64 = a.iter().zip(&truth).map(|(u, v)| u * v).sum();
        let mut y = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < 0.1 {
            y = -y;
        }
        rows.push(SparseVector::from_dense(&a).with_dim(p));
        labels.push(y);
    }
    ClassificationDataset::new(rows, labels, p)
}

/// Data sets that can be bootstrapped row-wise.
pub trait Resample: Sized {
    fn len(&self) -> usize;
    fn pick(&self, idx: &[usize]) -> Self;
}

impl Resample for ClassificationDataset {
    fn len(&self) -> usize {
        self.n()
    }

    fn pick(&self, idx: &[usize]) -> Self {
        self.select(idx)
    }
}

impl Resample for ReturnsDataset {
    fn len(&self) -> usize {
        self.n()
    }

    fn pick(&self, idx: &[usize]) -> Self {
        self.select(idx)
    }
}

/// `n_out` rows drawn uniformly with replacement.
pub fn bootstrap_resample<D: Resample>(data: &D, n_out: usize, seed: u64) -> Result<D> {
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidInput("cannot resample an empty data set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = (0..n_out).map(|_| rng.random_range(0..n)).collect();
    Ok(data.pick(&idx))
}
