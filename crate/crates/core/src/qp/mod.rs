//! Dense strictly convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//!     minimize     1/2 x' H x + f' x
//!     subject to   G x <= h
//!                  A x  = b
//! ```
//!
//! with `H` symmetric positive definite. The solver is a dual active-set
//! method (Goldfarb–Idnani): it starts from the unconstrained minimizer and
//! adds the most violated constraint until the iterate is primal feasible,
//! dropping constraints whose multipliers would turn negative on the way.

mod dual_active_set;
mod dump;

pub use dual_active_set::solve;
pub use dump::{read_dump, write_dump};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings<T> {
    /// Upper bound on the returned KKT residual (infinity norm).
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for QpSettings<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_iter: 200,
        }
    }
}

/// A strictly convex QP with inequality and optional equality constraints.
#[derive(Debug, Clone)]
pub struct QpProblem<T: Real> {
    hessian: DMatrix<T>,
    linear: DVector<T>,
    ineq_g: DMatrix<T>,
    ineq_h: DVector<T>,
    eq_a: DMatrix<T>,
    eq_b: DVector<T>,
    chol: Cholesky<T, Dyn>,
}

impl<T: Real> QpProblem<T> {
    /// Builds a problem with inequality constraints only. `H` is symmetrized.
    pub fn new(
        hessian: DMatrix<T>,
        linear: DVector<T>,
        ineq_g: DMatrix<T>,
        ineq_h: DVector<T>,
    ) -> Result<Self> {
        let n = linear.len();
        if n == 0 {
            return Err(Error::Empty("QP decision vector"));
        }
        check_dim("QP hessian rows", n, hessian.nrows())?;
        check_dim("QP hessian cols", n, hessian.ncols())?;
        check_dim("QP inequality columns", n, ineq_g.ncols())?;
        check_dim("QP inequality rows", ineq_g.nrows(), ineq_h.len())?;
        let hessian = (&hessian + hessian.transpose()) * T::lit(0.5);
        let chol = Cholesky::new(hessian.clone())
            .ok_or(Error::NotPositiveDefinite("QP hessian"))?;
        Ok(Self {
            hessian,
            linear,
            ineq_g,
            ineq_h,
            eq_a: DMatrix::zeros(0, n),
            eq_b: DVector::zeros(0),
            chol,
        })
    }

    /// Adds equality constraints `A x = b`.
    pub fn with_equalities(mut self, eq_a: DMatrix<T>, eq_b: DVector<T>) -> Result<Self> {
        check_dim("QP equality columns", self.dim(), eq_a.ncols())?;
        check_dim("QP equality rows", eq_a.nrows(), eq_b.len())?;
        self.eq_a = eq_a;
        self.eq_b = eq_b;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_h.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_b.len()
    }

    pub fn hessian(&self) -> &DMatrix<T> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<T> {
        &self.linear
    }

    pub fn ineq_g(&self) -> &DMatrix<T> {
        &self.ineq_g
    }

    pub fn ineq_h(&self) -> &DVector<T> {
        &self.ineq_h
    }

    pub fn eq_a(&self) -> &DMatrix<T> {
        &self.eq_a
    }

    pub fn eq_b(&self) -> &DVector<T> {
        &self.eq_b
    }

    pub(crate) fn cholesky(&self) -> &Cholesky<T, Dyn> {
        &self.chol
    }

    /// `1/2 x'Hx + f'x`.
    pub fn objective(&self, x: &DVector<T>) -> T {
        (x.dot(&(&self.hessian * x))) * T::lit(0.5) + self.linear.dot(x)
    }
}

/// Result of a successful solve.
#[derive(Debug, Clone)]
pub struct QpSolution<T: Real> {
    pub x: DVector<T>,
    /// Inequality multipliers, one per row of `G` (zero when inactive).
    pub duals: DVector<T>,
    /// Equality multipliers, sign convention `H x + f + G'λ + A'μ = 0`.
    pub eq_duals: DVector<T>,
    /// Indices of the inequality rows active at the solution.
    pub active: Vec<usize>,
    pub kkt_residual: T,
    pub iterations: usize,
    /// Wall-clock solve time in seconds.
    pub solve_time: f64,
}

/// Infinity-norm KKT residual: the max of stationarity, primal feasibility,
/// dual feasibility and complementarity violations.
///
/// `duals` holds the inequality multipliers followed by the equality
/// multipliers (length `m + q`).
pub fn kkt_residual<T: Real>(p: &QpProblem<T>, x: &DVector<T>, duals: &DVector<T>) -> Result<T> {
    let (m, q) = (p.num_ineq(), p.num_eq());
    check_dim("kkt_residual x", p.dim(), x.len())?;
    check_dim("kkt_residual duals", m + q, duals.len())?;
    let lam = duals.rows(0, m);
    let mu = duals.rows(m, q);

    let mut grad = &p.hessian * x + &p.linear;
    if m > 0 {
        grad += p.ineq_g.transpose() * lam;
    }
    if q > 0 {
        grad += p.eq_a.transpose() * mu;
    }
    let mut res = grad.amax();

    if m > 0 {
        let slack = &p.ineq_g * x - &p.ineq_h;
        for i in 0..m {
            res = res.max(slack[i].max(T::zero()));
            res = res.max((-lam[i]).max(T::zero()));
            res = res.max((lam[i] * slack[i]).abs());
        }
    }
    if q > 0 {
        res = res.max((&p.eq_a * x - &p.eq_b).amax());
    }
    Ok(res)
}
