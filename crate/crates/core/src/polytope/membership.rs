use super::hull::cross;
use super::VPolytope;
use crate::error::{check_dim, Error, Result};
use crate::qp::{self, QpProblem, QpSettings};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

/// Outcome of a membership query.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership<T: Real> {
    pub contained: bool,
    /// Convex weights over the stored vertices (nonnegative, summing to one).
    pub weights: DVector<T>,
    /// `|| V w - x ||_2` for the returned weights.
    pub residual: T,
}

const MAX_PROX_STEPS: usize = 200;

fn residual_of<T: Real>(shifted: &DMatrix<T>, w: &DVector<T>) -> T {
    (shifted * w).norm()
}

/// Clamps tiny negative weights and renormalizes onto the simplex.
fn to_simplex<T: Real>(w: &DVector<T>) -> DVector<T> {
    let clamped = w.map(|v| v.max(T::zero()));
    let s = clamped.sum();
    if s > T::zero() {
        clamped / s
    } else {
        DVector::from_element(w.len(), T::one() / T::lit(w.len() as f64))
    }
}

/// Clamped parameter of the projection of `x` onto the segment `[a, b]`.
fn segment_param<T: Real>(a: &DVector<T>, b: &DVector<T>, x: &DVector<T>) -> T {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == T::zero() {
        return T::zero();
    }
    ((x - a).dot(&d) / len2).max(T::zero()).min(T::one())
}

/// Exact membership in the plane: barycentric weights in a fan triangle of
/// the hull for interior points, nearest-edge projection otherwise.
fn planar<T: Real>(p: &VPolytope<T>, x: &DVector<T>, tol: T) -> Membership<T> {
    let hull = super::hull::monotone_chain(p.vertices()).expect("polytope is non-empty");
    let index = |h: &DVector<T>| {
        p.vertices()
            .iter()
            .position(|v| v == h)
            .expect("hull points are stored vertices")
    };
    let n = hull.len();
    let mut w = DVector::zeros(p.num_vertices());
    let put_edge = |a: &DVector<T>, b: &DVector<T>, w: &mut DVector<T>| {
        let t = segment_param(a, b, x);
        w[index(a)] += T::one() - t;
        w[index(b)] += t;
    };
    match n {
        1 => w[index(&hull[0])] = T::one(),
        2 => put_edge(&hull[0], &hull[1], &mut w),
        _ => {
            let inside = (0..n).all(|i| cross(&hull[i], &hull[(i + 1) % n], x) >= T::zero());
            if inside {
                let mut best: Option<(T, [T; 3], usize)> = None;
                for i in 1..n - 1 {
                    let (a, b, c) = (&hull[0], &hull[i], &hull[i + 1]);
                    let d = cross(a, b, c);
                    let l = [cross(b, c, x) / d, cross(c, a, x) / d, cross(a, b, x) / d];
                    let worst = l[0].min(l[1]).min(l[2]);
                    if best.as_ref().is_none_or(|(bw, _, _)| worst > *bw) {
                        best = Some((worst, l, i));
                    }
                }
                let (_, l, i) = best.expect("at least one fan triangle");
                let l = l.map(|v| v.max(T::zero()));
                let s = l[0] + l[1] + l[2];
                w[index(&hull[0])] += l[0] / s;
                w[index(&hull[i])] += l[1] / s;
                w[index(&hull[i + 1])] += l[2] / s;
            } else {
                let mut best: Option<(T, usize)> = None;
                for i in 0..n {
                    let (a, b) = (&hull[i], &hull[(i + 1) % n]);
                    let t = segment_param(a, b, x);
                    let dist = (a + (b - a) * t - x).norm();
                    if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                        best = Some((dist, i));
                    }
                }
                let (_, i) = best.expect("at least one edge");
                put_edge(&hull[i], &hull[(i + 1) % n], &mut w);
            }
        }
    }
    let shifted = DMatrix::from_fn(2, p.num_vertices(), |r, j| p.vertices()[j][r] - x[r]);
    let residual = residual_of(&shifted, &w);
    Membership {
        contained: residual <= tol,
        weights: w,
        residual,
    }
}

/// Projects `x` onto the polytope by minimizing `||V w - x||^2` over the
/// simplex.
///
/// The Gram matrix is only semidefinite, so each step solves the strictly
/// convex proximal problem `||V w - x||^2 + mu ||w - w_k||^2`; the proximal
/// iterates converge to a minimizer of the unregularized problem.
pub(super) fn contains<T: Real>(p: &VPolytope<T>, x: &DVector<T>, tol: T) -> Result<Membership<T>> {
    check_dim("contains", p.dim(), x.len())?;
    if tol <= T::zero() {
        return Err(Error::Invalid("membership tolerance must be positive".into()));
    }
    if p.dim() == 2 {
        return Ok(planar(p, x, tol));
    }
    let m = p.num_vertices();
    let shifted = DMatrix::from_fn(p.dim(), m, |i, j| p.vertices()[j][i] - x[i]);

    if m == 1 {
        let weights = DVector::from_element(1, T::one());
        let residual = residual_of(&shifted, &weights);
        return Ok(Membership {
            contained: residual <= tol,
            weights,
            residual,
        });
    }

    let scale = shifted.amax().max(T::default_epsilon().powi(4));
    let unit = &shifted / scale;
    let mu = T::default_epsilon().sqrt();
    let hessian = (unit.transpose() * &unit + DMatrix::identity(m, m) * mu) * T::lit(2.0);
    let settings = QpSettings {
        tol: T::default_epsilon().sqrt(),
        max_iter: 50 * m + 50,
    };

    let mut w = DVector::from_element(m, T::one() / T::lit(m as f64));
    let mut residual = residual_of(&shifted, &w);
    let early_exit = tol * T::lit(1e-2);
    for _ in 0..MAX_PROX_STEPS {
        if residual <= early_exit {
            break;
        }
        let linear = &w * (-T::lit(2.0) * mu);
        let prob = QpProblem::new(hessian.clone(), linear, -DMatrix::identity(m, m), DVector::zeros(m))?
            .with_equalities(DMatrix::from_element(1, m, T::one()), DVector::from_element(1, T::one()))?;
        let x = match qp::solve(&prob, &settings) {
            Ok(sol) => sol.x,
            Err(Error::NotConverged { best, .. }) => DVector::from_iterator(m, best.into_iter().map(T::lit)),
            Err(e) => return Err(e),
        };
        let next = to_simplex(&x);
        let step = (&next - &w).amax();
        w = next;
        residual = residual_of(&shifted, &w);
        if step <= T::default_epsilon() * T::lit(16.0) {
            break;
        }
    }
    Ok(Membership {
        contained: residual <= tol,
        weights: w,
        residual,
    })
}
