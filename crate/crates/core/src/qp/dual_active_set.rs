use super::{kkt_residual, QpProblem, QpSettings, QpSolution};
use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use std::time::Instant;

/// Constraint data in the `n' x >= b` convention the method works with.
/// Inequalities come first, then equalities.
struct Constraints<T: Real> {
    normals: DMatrix<T>,
    /// `L^{-1} n` for every normal, where `H = L L'`.
    scaled: DMatrix<T>,
    rhs: DVector<T>,
    num_ineq: usize,
}

impl<T: Real> Constraints<T> {
    fn new(p: &QpProblem<T>) -> Self {
        let (n, m, q) = (p.dim(), p.num_ineq(), p.num_eq());
        let mut normals = DMatrix::zeros(n, m + q);
        let mut rhs = DVector::zeros(m + q);
        for i in 0..m {
            normals.set_column(i, &(-p.ineq_g().row(i).transpose()));
            rhs[i] = -p.ineq_h()[i];
        }
        for i in 0..q {
            normals.set_column(m + i, &p.eq_a().row(i).transpose());
            rhs[m + i] = p.eq_b()[i];
        }
        let scaled = p
            .cholesky()
            .l()
            .solve_lower_triangular(&normals)
            .expect("cholesky factor is nonsingular");
        Self {
            normals,
            scaled,
            rhs,
            num_ineq: m,
        }
    }

    fn slack(&self, i: usize, x: &DVector<T>) -> T {
        self.normals.column(i).dot(x) - self.rhs[i]
    }
}

/// Primal step direction `z`, its curvature `z'n_p` and the dual direction
/// `r` for adding constraint `p` to the active set.
struct Directions<T: Real> {
    z: DVector<T>,
    curvature: T,
    r: DVector<T>,
    /// True when `n_p` is numerically in the span of the active normals.
    dependent: bool,
}

fn active_qr<T: Real>(c: &Constraints<T>, active: &[usize]) -> (DMatrix<T>, DMatrix<T>) {
    let n = c.scaled.nrows();
    let mut na = DMatrix::zeros(n, active.len());
    for (j, &idx) in active.iter().enumerate() {
        na.set_column(j, &c.scaled.column(idx));
    }
    let qr = na.qr();
    (qr.q(), qr.r())
}

fn directions<T: Real>(
    p: &QpProblem<T>,
    c: &Constraints<T>,
    active: &[usize],
    idx: usize,
) -> Directions<T> {
    let np = c.scaled.column(idx).into_owned();
    let (zt, r) = if active.is_empty() {
        (np.clone(), DVector::zeros(0))
    } else {
        let (q1, r1) = active_qr(c, active);
        let w = q1.transpose() * &np;
        let zt = &np - &q1 * &w;
        let r = r1
            .solve_upper_triangular(&w)
            .unwrap_or_else(|| DVector::zeros(active.len()));
        (zt, r)
    };
    let thresh = T::default_epsilon() * T::lit(1e4);
    let dependent = zt.norm() <= thresh * np.norm().max(T::default_epsilon().powi(4));
    let curvature = zt.norm_squared();
    let z = p
        .cholesky()
        .l()
        .tr_solve_lower_triangular(&zt)
        .expect("cholesky factor is nonsingular");
    Directions {
        z,
        curvature,
        r,
        dependent,
    }
}

/// Re-solves the equality-constrained problem on the final active set from
/// scratch, removing drift accumulated by the incremental updates.
fn polish<T: Real>(
    p: &QpProblem<T>,
    c: &Constraints<T>,
    active: &[usize],
) -> Option<(DVector<T>, DVector<T>)> {
    let x0 = -p.cholesky().solve(p.linear());
    if active.is_empty() {
        return Some((x0, DVector::zeros(0)));
    }
    let (_, r1) = active_qr(c, active);
    let rhs = DVector::from_iterator(
        active.len(),
        active.iter().map(|&i| c.rhs[i] - c.normals.column(i).dot(&x0)),
    );
    let y = r1.tr_solve_upper_triangular(&rhs)?;
    let u = r1.solve_upper_triangular(&y)?;
    let mut na = DMatrix::zeros(p.dim(), active.len());
    for (j, &idx) in active.iter().enumerate() {
        na.set_column(j, &c.scaled.column(idx));
    }
    let dx = p.cholesky().l().tr_solve_lower_triangular(&(na * &u))?;
    Some((x0 + dx, u))
}

fn pack_duals<T: Real>(c: &Constraints<T>, q: usize, active: &[usize], u: &DVector<T>) -> DVector<T> {
    let m = c.num_ineq;
    let mut duals = DVector::zeros(m + q);
    for (j, &idx) in active.iter().enumerate() {
        // Equality multipliers flip sign to match `Hx + f + A'mu = 0`.
        duals[idx] = if idx < m { u[j] } else { -u[j] };
    }
    duals
}

fn not_converged<T: Real>(iterations: usize, residual: T, x: &DVector<T>) -> Error {
    Error::NotConverged {
        iterations,
        residual: residual.to_f64_lossy(),
        best: x.iter().map(|v| v.to_f64_lossy()).collect(),
    }
}

/// Solves a strictly convex QP to the requested KKT tolerance.
///
/// The method is deterministic: constraint selection breaks ties by lowest
/// index and no randomization is involved.
pub fn solve<T: Real>(p: &QpProblem<T>, settings: &QpSettings<T>) -> Result<QpSolution<T>> {
    if settings.tol <= T::zero() {
        return Err(Error::Invalid("QP tolerance must be positive".into()));
    }
    let start = Instant::now();
    let c = Constraints::new(p);
    let (m, q) = (p.num_ineq(), p.num_eq());
    let feas_tol = settings.tol * T::lit(1e-3);

    let mut x = -p.cholesky().solve(p.linear());
    let mut active: Vec<usize> = Vec::with_capacity(m + q);
    let mut u: Vec<T> = Vec::with_capacity(m + q);
    let mut iterations = 0usize;

    for idx in m..m + q {
        let d = directions(p, &c, &active, idx);
        let viol = -c.slack(idx, &x);
        if d.dependent {
            if viol.abs() > feas_tol {
                return Err(Error::Infeasible);
            }
            continue;
        }
        let t = viol / d.curvature;
        x.axpy(t, &d.z, T::one());
        for (uj, rj) in u.iter_mut().zip(d.r.iter()) {
            *uj -= t * *rj;
        }
        u.push(t);
        active.push(idx);
        iterations += 1;
    }

    loop {
        // Most violated inactive inequality, lowest index on ties.
        let mut worst: Option<(usize, T)> = None;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let s = c.slack(i, &x);
            if s < -feas_tol && worst.is_none_or(|(_, w)| s < w) {
                worst = Some((i, s));
            }
        }
        let Some((add, _)) = worst else { break };

        let mut u_add = T::zero();
        loop {
            iterations += 1;
            if iterations > settings.max_iter {
                let duals = pack_duals(&c, q, &active, &DVector::from_vec(u.clone()));
                let res = kkt_residual(p, &x, &duals)?;
                return Err(not_converged(iterations - 1, res, &x));
            }
            let d = directions(p, &c, &active, add);

            let mut partial: Option<(usize, T)> = None;
            for (j, &idx) in active.iter().enumerate() {
                if idx < m && d.r[j] > T::zero() {
                    let ratio = u[j] / d.r[j];
                    if partial.is_none_or(|(_, t)| ratio < t) {
                        partial = Some((j, ratio));
                    }
                }
            }

            if d.dependent {
                // Pure dual step: no primal direction reduces the violation.
                let Some((l, t)) = partial else {
                    return Err(Error::Infeasible);
                };
                for (uj, rj) in u.iter_mut().zip(d.r.iter()) {
                    *uj -= t * *rj;
                }
                u_add += t;
                active.remove(l);
                u.remove(l);
                continue;
            }

            let full = (-c.slack(add, &x) / d.curvature).max(T::zero());
            let (t, drop) = match partial {
                Some((l, t1)) if t1 < full => (t1, Some(l)),
                _ => (full, None),
            };
            x.axpy(t, &d.z, T::one());
            for (uj, rj) in u.iter_mut().zip(d.r.iter()) {
                *uj -= t * *rj;
            }
            u_add += t;
            match drop {
                None => {
                    active.push(add);
                    u.push(u_add);
                    break;
                }
                Some(l) => {
                    active.remove(l);
                    u.remove(l);
                }
            }
        }
    }

    let u = DVector::from_vec(u);
    let mut duals = pack_duals(&c, q, &active, &u);
    let mut residual = kkt_residual(p, &x, &duals)?;
    if let Some((xp, up)) = polish(p, &c, &active) {
        let dp = pack_duals(&c, q, &active, &up);
        let rp = kkt_residual(p, &xp, &dp)?;
        if rp < residual {
            x = xp;
            duals = dp;
            residual = rp;
        }
    }
    if residual > settings.tol {
        return Err(not_converged(iterations, residual, &x));
    }

    let mut ineq_active: Vec<usize> = active.iter().copied().filter(|&i| i < m).collect();
    ineq_active.sort_unstable();
    Ok(QpSolution {
        duals: duals.rows(0, m).into_owned(),
        eq_duals: duals.rows(m, q).into_owned(),
        x,
        active: ineq_active,
        kkt_residual: residual,
        iterations,
        solve_time: start.elapsed().as_secs_f64(),
    })
}
