//! Shared test helpers: an enumeration oracle for small prox-linear subproblems and
//! random instance generators.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use stochastic_gn::outer::{OuterFunction, OuterKind};

/// `phi(f + J d) + (M/2) ||d||^2`.
pub fn subproblem_objective(phi: &OuterFunction, f: &DVector<f64>, j: &DMatrix<f64>, m: f64, d: &DVector<f64>) -> f64 {
    phi.value(&(f + j * d)) + 0.5 * m * d.norm_squared()
}

/// Minimizer of `sum_{i in Q} (w/2) u_i^2 + sum_i c_i u_i + (M/2) ||d||^2` subject to
/// `u_i = 0` for `i in Z`, where `u = f + J d`. `None` when the constraints are
/// inconsistent.
fn piece_solve(
    f: &DVector<f64>,
    j: &DMatrix<f64>,
    m: f64,
    quad: &[usize],
    w: f64,
    lin: &DVector<f64>,
    zero: &[usize],
) -> Option<DVector<f64>> {
    let p = j.ncols();
    let mut h = DMatrix::identity(p, p) * m;
    let mut g = j.transpose() * lin;
    for &i in quad {
        let row = j.row(i).transpose();
        h += &row * row.transpose() * w;
        g += row * (w * f[i]);
    }
    let k = zero.len();
    let mut kkt = DMatrix::zeros(p + k, p + k);
    kkt.view_mut((0, 0), (p, p)).copy_from(&h);
    let mut rhs = DVector::zeros(p + k);
    rhs.rows_mut(0, p).copy_from(&(-g));
    for (r, &i) in zero.iter().enumerate() {
        for c in 0..p {
            kkt[(p + r, c)] = j[(i, c)];
            kkt[(c, p + r)] = j[(i, c)];
        }
        rhs[p + r] = -f[i];
    }
    let sol = kkt.svd(true, true).solve(&rhs, 1e-12).ok()?;
    let d = sol.rows(0, p).into_owned();
    let u = f + j * &d;
    if zero.iter().any(|&i| u[i].abs() > 1e-8 * (1.0 + f.amax())) {
        return None;
    }
    Some(d)
}

/// Every assignment of one of `k` pieces to each of `q` coordinates.
fn patterns(q: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..q {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |s| {
                    let mut p = p.clone();
                    p.push(s);
                    p
                })
            })
            .collect();
    }
    out
}

/// Exact minimizer of the prox-linear subproblem (no regularizer) for small `q`.
///
/// Piecewise outer functions are handled by enumerating the active piece of every
/// coordinate and solving the resulting equality-constrained quadratic program; the
/// best candidate under the true objective is returned. The Euclidean norm uses the
/// optimality condition `u = t w`, `w = (t I + rho J J^T / M)^{-1} f`, `||w|| = 1`, solved
/// for `t > 0` by bisection, plus the candidate `u = 0`.
pub fn oracle_solve(phi: &OuterFunction, f: &DVector<f64>, j: &DMatrix<f64>, m: f64) -> DVector<f64> {
    let q = f.len();
    let p = j.ncols();
    let rho = phi.weight;
    let mut candidates: Vec<DVector<f64>> = Vec::new();
    match phi.kind {
        OuterKind::HalfSquared => {
            candidates.extend(piece_solve(f, j, m, &(0..q).collect::<Vec<_>>(), rho, &DVector::zeros(q), &[]));
        }
        OuterKind::L1Norm | OuterKind::HingePenalty => {
            let neg = if phi.kind == OuterKind::L1Norm { -rho } else { 0.0 };
            for pat in patterns(q, 3) {
                let lin = DVector::from_iterator(q, pat.iter().map(|&s| match s {
                    0 => rho,
                    1 => neg,
                    _ => 0.0,
                }));
                let zero: Vec<usize> = (0..q).filter(|&i| pat[i] == 2).collect();
                candidates.extend(piece_solve(f, j, m, &[], 0.0, &lin, &zero));
            }
        }
        OuterKind::Huber { delta } => {
            for pat in patterns(q, 3) {
                let lin = DVector::from_iterator(q, pat.iter().map(|&s| match s {
                    0 => rho * delta,
                    1 => -rho * delta,
                    _ => 0.0,
                }));
                let quad: Vec<usize> = (0..q).filter(|&i| pat[i] == 2).collect();
                candidates.extend(piece_solve(f, j, m, &quad, rho, &lin, &[]));
            }
        }
        OuterKind::L2Norm => {
            candidates.extend(piece_solve(f, j, m, &[], 0.0, &DVector::zeros(q), &(0..q).collect::<Vec<_>>()));
            // u = f + J d with d = -rho J^T w / M and u = t w, ||w|| = 1
            let a = j * j.transpose() * (rho / m);
            let w_of = |t: f64| (DMatrix::identity(q, q) * t + &a).lu().solve(f);
            let norm_at = |t: f64| w_of(t).map_or(f64::INFINITY, |w| w.norm());
            if norm_at(0.0) > 1.0 {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                while norm_at(hi) > 1.0 {
                    hi *= 2.0;
                }
                for _ in 0..300 {
                    let mid = 0.5 * (lo + hi);
                    if norm_at(mid) > 1.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if let Some(w) = w_of(hi) {
                    candidates.push(-(j.transpose() * w) * (rho / m));
                }
            }
        }
    }
    candidates.push(DVector::zeros(p));
    candidates
        .into_iter()
        .min_by(|a, b| {
            subproblem_objective(phi, f, j, m, a).total_cmp(&subproblem_objective(phi, f, j, m, b))
        })
        .expect("at least one candidate")
}

pub fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_matrix<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// One of the catalog outer functions with random parameters.
pub fn random_outer<R: Rng>(k: usize, rng: &mut R) -> OuterFunction {
    let weight = rng.random_range(0.5..2.0);
    match k % 5 {
        0 => OuterFunction::l2(),
        1 => OuterFunction::l1(),
        2 => OuterFunction::huber(rng.random_range(0.2..2.0)),
        3 => OuterFunction::hinge(1.0),
        _ => OuterFunction::half_squared(),
    }
    .with_weight(weight)
}

/// Central finite-difference gradient of a scalar function.
pub fn central_difference<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

/// `||a - b|| / ||b||`, with an absolute comparison when `b = 0`.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = b.norm();
    if scale == 0.0 {
        (a - b).norm()
    } else {
        (a - b).norm() / scale
    }
}
