//! Affine LPV models `x+ = A(p) x + B u` with `A(p) = A0 + sum_l p[l] A_l`
//! and self-scheduling `p = rho(x, u)`.

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

/// The scheduling map `rho: (x, u) -> p`.
pub trait SchedulingMap<T: Real>: Send + Sync {
    /// Output dimension `n_p`.
    fn n_p(&self) -> usize;

    fn eval(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T>;

    /// `d rho / d x` (`n_p x n_x`) for maps that depend on the state only.
    /// `None` when unavailable.
    fn state_jacobian(&self, _x: &DVector<T>) -> Option<DMatrix<T>> {
        None
    }
}

/// `p = sinc(x[coord])`, the unbalanced-disk scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SincScheduling {
    pub coord: usize,
}

impl<T: Real> SchedulingMap<T> for SincScheduling {
    fn n_p(&self) -> usize {
        1
    }

    fn eval(&self, x: &DVector<T>, _u: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, crate::scalar::sinc(x[self.coord]))
    }

    fn state_jacobian(&self, x: &DVector<T>) -> Option<DMatrix<T>> {
        let mut j = DMatrix::zeros(1, x.len());
        j[(0, self.coord)] = crate::scalar::sinc_prime(x[self.coord]);
        Some(j)
    }
}

/// Scheduling that ignores the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantScheduling<T: Real>(pub DVector<T>);

impl<T: Real> SchedulingMap<T> for ConstantScheduling<T> {
    fn n_p(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _x: &DVector<T>, _u: &DVector<T>) -> DVector<T> {
        self.0.clone()
    }

    fn state_jacobian(&self, x: &DVector<T>) -> Option<DMatrix<T>> {
        Some(DMatrix::zeros(self.0.len(), x.len()))
    }
}

/// Scheduling given by a closure.
pub struct FnScheduling<T: Real> {
    n_p: usize,
    f: Box<dyn Fn(&DVector<T>, &DVector<T>) -> DVector<T> + Send + Sync>,
}

impl<T: Real> FnScheduling<T> {
    pub fn new(
        n_p: usize,
        f: impl Fn(&DVector<T>, &DVector<T>) -> DVector<T> + Send + Sync + 'static,
    ) -> Self {
        Self { n_p, f: Box::new(f) }
    }
}

impl<T: Real> SchedulingMap<T> for FnScheduling<T> {
    fn n_p(&self) -> usize {
        self.n_p
    }

    fn eval(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        (self.f)(x, u)
    }
}

/// Affine LPV model with scheduling-independent input matrix.
#[derive(Clone)]
pub struct AffineLpvModel<T: Real> {
    a_list: Vec<DMatrix<T>>,
    b: DMatrix<T>,
    rho: Arc<dyn SchedulingMap<T>>,
    t_s: T,
}

impl<T: Real> fmt::Debug for AffineLpvModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineLpvModel")
            .field("a_list", &self.a_list)
            .field("b", &self.b)
            .field("n_p", &self.n_p())
            .field("t_s", &self.t_s)
            .finish()
    }
}

impl<T: Real> AffineLpvModel<T> {
    /// `a_list` holds `A0, A1, ..., A_np`.
    pub fn new(
        a_list: Vec<DMatrix<T>>,
        b: DMatrix<T>,
        rho: Arc<dyn SchedulingMap<T>>,
        t_s: T,
    ) -> Result<Self> {
        let a0 = a_list.first().ok_or(Error::Empty("LPV matrix list"))?;
        let n_x = a0.nrows();
        if n_x == 0 {
            return Err(Error::Invalid("state dimension must be positive".into()));
        }
        for a in &a_list {
            check_dim("LPV A rows", n_x, a.nrows())?;
            check_dim("LPV A cols", n_x, a.ncols())?;
        }
        check_dim("LPV B rows", n_x, b.nrows())?;
        check_dim("LPV scheduling dimension", a_list.len() - 1, rho.n_p())?;
        if t_s <= T::zero() {
            return Err(Error::Invalid("sampling time must be positive".into()));
        }
        Ok(Self { a_list, b, rho, t_s })
    }

    pub fn n_x(&self) -> usize {
        self.a_list[0].nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_p(&self) -> usize {
        self.a_list.len() - 1
    }

    pub fn t_s(&self) -> T {
        self.t_s
    }

    pub fn a0(&self) -> &DMatrix<T> {
        &self.a_list[0]
    }

    /// `A_l` for `l = 1..=n_p`.
    pub fn a_l(&self, l: usize) -> &DMatrix<T> {
        &self.a_list[l]
    }

    pub fn a_list(&self) -> &[DMatrix<T>] {
        &self.a_list
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn scheduling_map(&self) -> &Arc<dyn SchedulingMap<T>> {
        &self.rho
    }

    /// `rho(x, u)`.
    pub fn schedule(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        self.rho.eval(x, u)
    }

    /// `A(p) = A0 + sum_l p[l] A_l`.
    pub fn eval_a(&self, p: &DVector<T>) -> Result<DMatrix<T>> {
        affine_eval(&self.a_list, p)
    }

    /// `A(p) x + B u`.
    pub fn step(&self, x: &DVector<T>, u: &DVector<T>, p: &DVector<T>) -> Result<DVector<T>> {
        check_dim("step state", self.n_x(), x.len())?;
        check_dim("step input", self.n_u(), u.len())?;
        Ok(self.eval_a(p)? * x + &self.b * u)
    }

    /// Self-scheduled response `x_{k+1} = A(rho(x_k, u_k)) x_k + B u_k`,
    /// returning `x_0 .. x_len`.
    pub fn simulate_true(&self, x0: &DVector<T>, inputs: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
        check_dim("simulate_true x0", self.n_x(), x0.len())?;
        let mut traj = Vec::with_capacity(inputs.len() + 1);
        traj.push(x0.clone());
        for u in inputs {
            let x = traj.last().expect("non-empty");
            let p = self.schedule(x, u);
            let next = self.step(x, u, &p)?;
            traj.push(next);
        }
        Ok(traj)
    }

    /// Applies the state feedback `u = K x + v`.
    pub fn close_loop(&self, gain: DMatrix<T>) -> Result<ClosedLoopModel<T>> {
        check_dim("gain rows", self.n_u(), gain.nrows())?;
        check_dim("gain cols", self.n_x(), gain.ncols())?;
        let mut ac_list = self.a_list.clone();
        ac_list[0] = &self.a_list[0] + &self.b * &gain;
        Ok(ClosedLoopModel {
            base: self.clone(),
            gain,
            ac_list,
        })
    }
}

fn affine_eval<T: Real>(list: &[DMatrix<T>], p: &DVector<T>) -> Result<DMatrix<T>> {
    check_dim("scheduling vector", list.len() - 1, p.len())?;
    let mut a = list[0].clone();
    for (l, pl) in p.iter().enumerate() {
        a += &list[l + 1] * *pl;
    }
    Ok(a)
}

/// LPV model under the feedback `u = K x + v`: `x+ = A_c(p) x + B v` with
/// `A_c0 = A0 + B K` and `A_cl = A_l` for `l >= 1`.
#[derive(Clone, Debug)]
pub struct ClosedLoopModel<T: Real> {
    base: AffineLpvModel<T>,
    gain: DMatrix<T>,
    ac_list: Vec<DMatrix<T>>,
}

impl<T: Real> ClosedLoopModel<T> {
    pub fn base(&self) -> &AffineLpvModel<T> {
        &self.base
    }

    pub fn gain(&self) -> &DMatrix<T> {
        &self.gain
    }

    pub fn n_x(&self) -> usize {
        self.base.n_x()
    }

    pub fn n_u(&self) -> usize {
        self.base.n_u()
    }

    pub fn n_p(&self) -> usize {
        self.base.n_p()
    }

    pub fn b(&self) -> &DMatrix<T> {
        self.base.b()
    }

    pub fn ac0(&self) -> &DMatrix<T> {
        &self.ac_list[0]
    }

    pub fn ac_l(&self, l: usize) -> &DMatrix<T> {
        &self.ac_list[l]
    }

    pub fn ac_list(&self) -> &[DMatrix<T>] {
        &self.ac_list
    }

    pub fn schedule(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        self.base.schedule(x, u)
    }

    /// `A_c(p)`.
    pub fn eval_ac(&self, p: &DVector<T>) -> Result<DMatrix<T>> {
        affine_eval(&self.ac_list, p)
    }

    /// `sigma(p) = sum_l p[l] A_cl`, the scheduling-dependent part of `A_c(p)`.
    pub fn sigma(&self, p: &DVector<T>) -> Result<DMatrix<T>> {
        check_dim("scheduling vector", self.n_p(), p.len())?;
        let mut s = DMatrix::zeros(self.n_x(), self.n_x());
        for (l, pl) in p.iter().enumerate() {
            s += &self.ac_list[l + 1] * *pl;
        }
        Ok(s)
    }

    /// Total plant input `K x + v`.
    pub fn total_input(&self, x: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        &self.gain * x + v
    }

    /// `A_c(p) x + B v`.
    pub fn step(&self, x: &DVector<T>, v: &DVector<T>, p: &DVector<T>) -> Result<DVector<T>> {
        check_dim("step state", self.n_x(), x.len())?;
        check_dim("step input", self.n_u(), v.len())?;
        Ok(self.eval_ac(p)? * x + self.b() * v)
    }

    /// Self-scheduled closed-loop response. The scheduling is evaluated at the
    /// total plant input `K x + v`.
    pub fn simulate_true(&self, x0: &DVector<T>, inputs: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
        check_dim("simulate_true x0", self.n_x(), x0.len())?;
        let mut traj = Vec::with_capacity(inputs.len() + 1);
        traj.push(x0.clone());
        for v in inputs {
            let x = traj.last().expect("non-empty");
            let p = self.schedule(x, &self.total_input(x, v));
            let next = self.step(x, v, &p)?;
            traj.push(next);
        }
        Ok(traj)
    }
}
