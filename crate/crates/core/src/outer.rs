//! The outer convex function `phi` of `phi(F(x))`.
//!
//! Every kind carries a positive weight `rho`, so `phi = rho * base`. For the hinge
//! penalty this is the penalty parameter; for the norms it is a plain scaling
//! (`rho = 1` gives the unweighted norm).

use nalgebra::DVector;

/// Base shape of the outer function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterKind {
    /// Euclidean norm `||u||_2`.
    L2Norm,
    /// `||u||_1`.
    L1Norm,
    /// Huber with threshold `delta`, applied per coordinate and summed.
    Huber { delta: f64 },
    /// `sum_i max(u_i, 0)`.
    HingePenalty,
    /// `0.5 ||u||^2`. Not globally Lipschitz; used by toy problems.
    HalfSquared,
}

/// `phi(u) = weight * base(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterFunction {
    pub kind: OuterKind,
    pub weight: f64,
}

/// Relative slack used when deciding whether a dual vector lies on the boundary of
/// `dom phi*`.
pub const DOMAIN_TOL: f64 = 1e-9;

/// Distance from a point to `d phi*(y)`, or a flag that `y` is outside `dom phi*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateDistance {
    pub value: f64,
    pub in_domain: bool,
}

impl OuterFunction {
    pub fn new(kind: OuterKind, weight: f64) -> Self {
        assert!(weight > 0.0, "outer weight must be positive");
        if let OuterKind::Huber { delta } = kind {
            assert!(delta > 0.0, "Huber threshold must be positive");
        }
        Self { kind, weight }
    }

    pub fn l2() -> Self {
        Self::new(OuterKind::L2Norm, 1.0)
    }

    pub fn l1() -> Self {
        Self::new(OuterKind::L1Norm, 1.0)
    }

    pub fn huber(delta: f64) -> Self {
        Self::new(OuterKind::Huber { delta }, 1.0)
    }

    pub fn hinge(rho: f64) -> Self {
        Self::new(OuterKind::HingePenalty, rho)
    }

    pub fn half_squared() -> Self {
        Self::new(OuterKind::HalfSquared, 1.0)
    }

    pub fn with_weight(self, weight: f64) -> Self {
        Self::new(self.kind, weight)
    }

    pub fn value(&self, u: &DVector<f64>) -> f64 {
        let w = self.weight;
        match self.kind {
            OuterKind::L2Norm => w * u.norm(),
            OuterKind::L1Norm => w * u.iter().map(|v| v.abs()).sum::<f64>(),
            OuterKind::Huber { delta } => w * u.iter().map(|&v| huber(v, delta)).sum::<f64>(),
            OuterKind::HingePenalty => w * u.iter().map(|v| v.max(0.0)).sum::<f64>(),
            OuterKind::HalfSquared => 0.5 * w * u.norm_squared(),
        }
    }

    /// Lipschitz constant w.r.t. the Euclidean norm on `R^q`; `None` when `phi` is not
    /// globally Lipschitz.
    pub fn lipschitz(&self, q: usize) -> Option<f64> {
        let w = self.weight;
        let sq = (q as f64).sqrt();
        match self.kind {
            OuterKind::L2Norm => Some(w),
            OuterKind::L1Norm | OuterKind::HingePenalty => Some(w * sq),
            OuterKind::Huber { delta } => Some(w * delta * sq),
            OuterKind::HalfSquared => None,
        }
    }

    /// `argmin_u phi(u) + ||u - v||^2 / (2 lambda)`.
    pub fn prox(&self, v: &DVector<f64>, lambda: f64) -> DVector<f64> {
        debug_assert!(lambda > 0.0);
        let t = lambda * self.weight;
        match self.kind {
            OuterKind::L2Norm => {
                let nv = v.norm();
                if nv <= t {
                    DVector::zeros(v.len())
                } else {
                    v * (1.0 - t / nv)
                }
            }
            OuterKind::L1Norm => v.map(|x| soft_threshold(x, t)),
            OuterKind::HingePenalty => v.map(|x| {
                if x > t {
                    x - t
                } else if x < 0.0 {
                    x
                } else {
                    0.0
                }
            }),
            OuterKind::Huber { delta } => v.map(|x| {
                if x.abs() <= delta * (1.0 + t) {
                    x / (1.0 + t)
                } else {
                    x - t * delta * x.signum()
                }
            }),
            OuterKind::HalfSquared => v / (1.0 + t),
        }
    }

    /// `argmin_u phi*(u) + ||u - v||^2 / (2 lambda)`.
    ///
    /// Closed forms agreeing with Moreau's identity
    /// `prox_{lambda phi*}(v) = v - lambda prox_{phi/lambda}(v/lambda)`; for the norms and
    /// the hinge penalty this is the projection onto the dual ball or box.
    pub fn prox_conjugate(&self, v: &DVector<f64>, lambda: f64) -> DVector<f64> {
        debug_assert!(lambda > 0.0);
        let w = self.weight;
        match self.kind {
            OuterKind::L2Norm => {
                let nv = v.norm();
                if nv <= w {
                    v.clone()
                } else {
                    v * (w / nv)
                }
            }
            OuterKind::L1Norm => v.map(|x| x.clamp(-w, w)),
            OuterKind::HingePenalty => v.map(|x| x.clamp(0.0, w)),
            OuterKind::Huber { delta } => {
                let r = w * delta;
                v.map(|x| (x * w / (w + lambda)).clamp(-r, r))
            }
            OuterKind::HalfSquared => v * (w / (w + lambda)),
        }
    }

    /// `phi*(y)`; `+inf` outside the domain.
    pub fn conjugate_value(&self, y: &DVector<f64>) -> f64 {
        let w = self.weight;
        let tol = DOMAIN_TOL * w.max(1.0);
        match self.kind {
            OuterKind::L2Norm => indicator(y.norm() <= w + tol),
            OuterKind::L1Norm => indicator(y.iter().all(|v| v.abs() <= w + tol)),
            OuterKind::HingePenalty => indicator(y.iter().all(|&v| v >= -tol && v <= w + tol)),
            OuterKind::Huber { delta } => {
                let r = w * delta;
                if y.iter().all(|v| v.abs() <= r + tol) {
                    y.norm_squared() / (2.0 * w)
                } else {
                    f64::INFINITY
                }
            }
            OuterKind::HalfSquared => y.norm_squared() / (2.0 * w),
        }
    }

    /// `dist(z, d phi*(y))` in closed form.
    ///
    /// Dual vectors within `DOMAIN_TOL` of a face of `dom phi*` are treated as lying on
    /// it, so the normal cone of that face is used.
    pub fn conjugate_subdiff_distance(&self, y: &DVector<f64>, z: &DVector<f64>) -> ConjugateDistance {
        assert_eq!(y.len(), z.len());
        let w = self.weight;
        let tol = DOMAIN_TOL * w.max(1.0);
        let outside = ConjugateDistance { value: f64::INFINITY, in_domain: false };
        let inside = |value: f64| ConjugateDistance { value, in_domain: true };
        match self.kind {
            OuterKind::L2Norm => {
                let ny = y.norm();
                if ny > w + tol {
                    outside
                } else if ny < w - tol {
                    inside(z.norm())
                } else {
                    // normal cone of the ball at y: the ray {t y, t >= 0}
                    let dir = y / ny;
                    let s = z.dot(&dir);
                    if s <= 0.0 {
                        inside(z.norm())
                    } else {
                        inside((z - dir * s).norm())
                    }
                }
            }
            OuterKind::L1Norm => box_normal_distance(y, z, -w, w, tol).map_or(outside, inside),
            OuterKind::HingePenalty => box_normal_distance(y, z, 0.0, w, tol).map_or(outside, inside),
            OuterKind::Huber { delta } => {
                // d phi*(y) = y / w + N_{[-w delta, w delta]^q}(y)
                let shifted = z - y / w;
                let r = w * delta;
                box_normal_distance(y, &shifted, -r, r, tol).map_or(outside, inside)
            }
            OuterKind::HalfSquared => inside((z - y / w).norm()),
        }
    }

    /// Short label used by the CLI and CSV metadata.
    pub fn label(&self) -> &'static str {
        match self.kind {
            OuterKind::L2Norm => "l2",
            OuterKind::L1Norm => "l1",
            OuterKind::Huber { .. } => "huber",
            OuterKind::HingePenalty => "hinge",
            OuterKind::HalfSquared => "quadratic",
        }
    }
}

fn indicator(inside: bool) -> f64 {
    if inside {
        0.0
    } else {
        f64::INFINITY
    }
}

pub(crate) fn huber(v: f64, delta: f64) -> f64 {
    let a = v.abs();
    if a <= delta {
        0.5 * v * v
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Soft-thresholding; ties at `|x| = t` resolve to zero.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x.abs() <= t {
        0.0
    } else {
        x - t * x.signum()
    }
}

/// Distance from `z` to the normal cone of the box `[lo, hi]^q` at `y`; `None` if `y`
/// is outside the box.
fn box_normal_distance(y: &DVector<f64>, z: &DVector<f64>, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (&yi, &zi) in y.iter().zip(z.iter()) {
        if yi < lo - tol || yi > hi + tol {
            return None;
        }
        let at_lo = yi <= lo + tol;
        let at_hi = yi >= hi - tol;
        let d = match (at_lo, at_hi) {
            // degenerate box: whole line
            (true, true) => 0.0,
            (true, false) => zi.max(0.0),
            (false, true) => zi.min(0.0),
            (false, false) => zi,
        };
        acc += d * d;
    }
    Some(acc.sqrt())
}
