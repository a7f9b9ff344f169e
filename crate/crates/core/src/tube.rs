//! Error dynamics between the self-scheduled response and the MPC prediction,
//! and the recursive polytopic tubes bounding it.
//!
//! With `sigma(x) = sum_l rho_l(x) A_cl` and `g(x) = sigma(x) x`, the error
//! `e_i = x_i - xhat_i` obeys
//!
//! ```text
//!     e_{i+1} = A_c0 e_i + g(x_i) - sigma_hat_i xhat_i
//!             = A_c0 e_i + sigma_hat_i (a_i - xhat_i) + grad g(xi) (x_i - a_i)
//! ```
//!
//! where `a_i` is the state `sigma_hat_i` was scheduled at and `xi` lies on
//! the segment `[a_i, x_i]`. Bounding the last two terms by the segments `V_i`
//! and `W` gives `E_{i+1} = A_c0 E_i + V_i + W`.

use crate::error::{check_dim, Error, Result};
use crate::lpv::{ClosedLoopModel, SchedulingMap};
use crate::mpc::SchedulingPrediction;
use crate::polytope::VPolytope;
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Samples used to bound the MVT slope over `xi_interval`.
const SLOPE_SAMPLES: usize = 4096;
/// Grid used to bracket the MVT point before bisection.
const MVT_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeConfig<T> {
    /// Bound on the per-step variation of the scheduled coordinate.
    pub delta1: T,
    /// Whether a bound on the second coordinate is imposed. It does not enter
    /// any vertex construction.
    pub delta2_present: bool,
    /// Interval assumed for the scheduled coordinate of the MVT point.
    pub xi_interval: (T, T),
}

impl<T: Real> TubeConfig<T> {
    pub fn new(delta1: T) -> Self {
        Self {
            delta1,
            delta2_present: false,
            xi_interval: (T::pi(), T::two_pi()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta1 >= T::zero()) || !self.delta1.is_finite() {
            return Err(Error::Invalid("delta1 must be finite and nonnegative".into()));
        }
        let (lo, hi) = self.xi_interval;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Invalid("xi interval must be finite and nonempty".into()));
        }
        Ok(())
    }
}

/// `A_cl = gamma e_row e_col'`, the structure the segment bounds rely on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOneEntry<T> {
    pub row: usize,
    pub col: usize,
    pub gamma: T,
}

/// Operators of the error dynamics for a closed-loop model. The scheduling
/// is evaluated with a zero input, so the map must depend on the state only.
#[derive(Clone)]
pub struct ErrorOperators<T: Real> {
    ac_list: Vec<DMatrix<T>>,
    rho: Arc<dyn SchedulingMap<T>>,
    n_u: usize,
}

impl<T: Real> std::fmt::Debug for ErrorOperators<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ErrorOperators")
            .field("ac_list", &self.ac_list)
            .finish_non_exhaustive()
    }
}

impl<T: Real> ErrorOperators<T> {
    pub fn new(model: &ClosedLoopModel<T>) -> Self {
        Self {
            ac_list: model.ac_list().to_vec(),
            rho: model.base().scheduling_map().clone(),
            n_u: model.n_u(),
        }
    }

    pub fn n_x(&self) -> usize {
        self.ac_list[0].nrows()
    }

    pub fn ac0(&self) -> &DMatrix<T> {
        &self.ac_list[0]
    }

    fn rho(&self, x: &DVector<T>) -> DVector<T> {
        self.rho.eval(x, &DVector::zeros(self.n_u))
    }

    /// `sum_l p[l] A_cl`.
    pub fn sigma_hat(&self, p: &DVector<T>) -> Result<DMatrix<T>> {
        check_dim("scheduling vector", self.ac_list.len() - 1, p.len())?;
        let mut s = DMatrix::zeros(self.n_x(), self.n_x());
        for (l, pl) in p.iter().enumerate() {
            s += &self.ac_list[l + 1] * *pl;
        }
        Ok(s)
    }

    /// `sigma(x) = sigma_hat(rho(x))`.
    pub fn sigma(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        check_dim("state", self.n_x(), x.len())?;
        self.sigma_hat(&self.rho(x))
    }

    /// `g(x) = sigma(x) x`.
    pub fn g(&self, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.sigma(x)? * x)
    }

    /// `grad g(x) = sum_l rho_l(x) A_cl + (A_cl x) grad rho_l(x)'`.
    pub fn g_jacobian(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        let p = self.rho(x);
        let d_rho = self
            .rho
            .state_jacobian(x)
            .ok_or_else(|| Error::Unsupported("scheduling map has no state Jacobian".into()))?;
        let mut j = self.sigma_hat(&p)?;
        for l in 0..p.len() {
            let col = &self.ac_list[l + 1] * x;
            j += col * d_rho.row(l);
        }
        Ok(j)
    }

    /// The single nonzero entry shared by every `A_cl`, `l >= 1`, when the
    /// scheduling is scalar.
    pub fn rank_one_entry(&self) -> Result<RankOneEntry<T>> {
        if self.ac_list.len() != 2 {
            return Err(Error::Unsupported(format!(
                "segment bounds need one scheduling parameter, got {}",
                self.ac_list.len() - 1
            )));
        }
        let a1 = &self.ac_list[1];
        let nz: Vec<(usize, usize)> = (0..a1.nrows())
            .flat_map(|r| (0..a1.ncols()).map(move |c| (r, c)))
            .filter(|&(r, c)| a1[(r, c)] != T::zero())
            .collect();
        match nz.as_slice() {
            [(row, col)] => Ok(RankOneEntry {
                row: *row,
                col: *col,
                gamma: a1[(*row, *col)],
            }),
            _ => Err(Error::Unsupported(format!(
                "A_c1 must have exactly one nonzero entry, found {}",
                nz.len()
            ))),
        }
    }
}

/// `e = true_x - pred_x`.
pub fn error_state<T: Real>(true_x: &DVector<T>, pred_x: &DVector<T>) -> Result<DVector<T>> {
    check_dim("error_state", true_x.len(), pred_x.len())?;
    Ok(true_x - pred_x)
}

/// One-step error without a mean-value point:
/// `A_c0 e + g(x_i) - sigma_hat_i xhat_i`.
pub fn error_step_direct<T: Real>(
    ops: &ErrorOperators<T>,
    e_i: &DVector<T>,
    x_i_true: &DVector<T>,
    xhat_i: &DVector<T>,
    sigma_hat_i: &DMatrix<T>,
) -> Result<DVector<T>> {
    let n = ops.n_x();
    check_dim("error", n, e_i.len())?;
    check_dim("xhat", n, xhat_i.len())?;
    check_dim("sigma_hat rows", n, sigma_hat_i.nrows())?;
    Ok(ops.ac0() * e_i + ops.g(x_i_true)? - sigma_hat_i * xhat_i)
}

/// `A_c0 e + sigma_hat (a - xhat) + grad g(xi) (x - a)` with anchor `a`.
pub fn propagate_error<T: Real>(
    ops: &ErrorOperators<T>,
    e_i: &DVector<T>,
    x_next_prev: &DVector<T>,
    x_i_true: &DVector<T>,
    xhat_i: &DVector<T>,
    sigma_hat_i: &DMatrix<T>,
    xi: &DVector<T>,
) -> Result<DVector<T>> {
    let grad = ops.g_jacobian(xi)?;
    propagate_error_with_gradient(ops, e_i, x_next_prev, x_i_true, xhat_i, sigma_hat_i, &grad)
}

/// [`propagate_error`] with the gradient supplied directly, e.g. assembled row
/// by row from [`mvt_gradient`].
pub fn propagate_error_with_gradient<T: Real>(
    ops: &ErrorOperators<T>,
    e_i: &DVector<T>,
    x_next_prev: &DVector<T>,
    x_i_true: &DVector<T>,
    xhat_i: &DVector<T>,
    sigma_hat_i: &DMatrix<T>,
    grad: &DMatrix<T>,
) -> Result<DVector<T>> {
    let n = ops.n_x();
    for (ctx, v) in [("error", e_i), ("anchor", x_next_prev), ("true state", x_i_true), ("xhat", xhat_i)] {
        check_dim(ctx, n, v.len())?;
    }
    check_dim("sigma_hat rows", n, sigma_hat_i.nrows())?;
    check_dim("sigma_hat cols", n, sigma_hat_i.ncols())?;
    check_dim("gradient rows", n, grad.nrows())?;
    check_dim("gradient cols", n, grad.ncols())?;
    Ok(ops.ac0() * e_i + sigma_hat_i * (x_next_prev - xhat_i) + grad * (x_i_true - x_next_prev))
}

/// Point `xi` on `[a, b]` with `g_r(b) - g_r(a) = grad g_r(xi) (b - a)` for
/// output row `r`, bracketed on a grid and refined by bisection.
pub fn mvt_point<T: Real>(ops: &ErrorOperators<T>, row: usize, a: &DVector<T>, b: &DVector<T>) -> Result<DVector<T>> {
    check_dim("mvt start", ops.n_x(), a.len())?;
    check_dim("mvt end", ops.n_x(), b.len())?;
    if row >= ops.n_x() {
        return Err(Error::Invalid(format!("row {row} out of range")));
    }
    let d = b - a;
    if d.iter().all(|v| *v == T::zero()) {
        return Ok(a.clone());
    }
    let target = ops.g(b)?[row] - ops.g(a)?[row];
    let point = |t: T| a + &d * t;
    let h = |t: T| -> Result<T> { Ok(target - ops.g_jacobian(&point(t))?.row(row).dot(&d.transpose())) };

    let mut grid = Vec::with_capacity(MVT_GRID + 1);
    for s in 0..=MVT_GRID {
        let t = T::lit(s as f64 / MVT_GRID as f64);
        grid.push((t, h(t)?));
    }
    for &(t, v) in &grid {
        if v == T::zero() {
            return Ok(point(t));
        }
    }
    let bracket = grid
        .windows(2)
        .find(|w| (w[0].1 < T::zero()) != (w[1].1 < T::zero()))
        .map(|w| (w[0], w[1]));
    let Some(((mut lo, mut h_lo), (mut hi, _))) = bracket else {
        let best = grid
            .iter()
            .min_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).expect("finite"))
            .expect("non-empty grid");
        return Ok(point(best.0));
    };
    let tol = T::lit(1e-12);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) * T::lit(0.5);
        let h_mid = h(mid)?;
        if h_mid == T::zero() {
            return Ok(point(mid));
        }
        if (h_mid < T::zero()) == (h_lo < T::zero()) {
            lo = mid;
            h_lo = h_mid;
        } else {
            hi = mid;
        }
    }
    Ok(point((lo + hi) * T::lit(0.5)))
}

/// Gradient whose row `r` is `grad g_r` at that row's MVT point on `[a, b]`,
/// so that `g(b) - g(a) = G (b - a)`.
pub fn mvt_gradient<T: Real>(ops: &ErrorOperators<T>, a: &DVector<T>, b: &DVector<T>) -> Result<DMatrix<T>> {
    let n = ops.n_x();
    let mut grad = DMatrix::zeros(n, n);
    for r in 0..n {
        let xi = mvt_point(ops, r, a, b)?;
        grad.set_row(r, &ops.g_jacobian(&xi)?.row(r));
    }
    Ok(grad)
}

fn unit<T: Real>(n: usize, r: usize, scale: T) -> DVector<T> {
    let mut v = DVector::zeros(n);
    v[r] = scale;
    v
}

/// `W`: the segment `Co{-w, w}` along the output row with
/// `|w| = delta1 max |d g_r / d x_c|` over the scheduled coordinate in
/// `xi_interval`.
pub fn build_w<T: Real>(ops: &ErrorOperators<T>, cfg: &TubeConfig<T>) -> Result<VPolytope<T>> {
    cfg.validate()?;
    let e = ops.rank_one_entry()?;
    let n = ops.n_x();
    let (lo, hi) = cfg.xi_interval;
    let mut slope = T::zero();
    for s in 0..=SLOPE_SAMPLES {
        let t = T::lit(s as f64 / SLOPE_SAMPLES as f64);
        let xi = unit(n, e.col, lo + (hi - lo) * t);
        let j = ops.g_jacobian(&xi)?;
        for r in 0..n {
            for c in 0..n {
                if (r, c) != (e.row, e.col) && j[(r, c)] != T::zero() {
                    return Err(Error::Unsupported("grad g is not supported on the A_c1 entry".into()));
                }
            }
        }
        slope = slope.max(j[(e.row, e.col)].abs());
    }
    VPolytope::symmetric_segment(unit(n, e.row, slope * cfg.delta1))
}

/// `V_i`: the segment `Co{-v, v}` with `|v| = |gamma p_hat| delta1`.
pub fn build_v<T: Real>(ops: &ErrorOperators<T>, cfg: &TubeConfig<T>, p_hat_i: &DVector<T>) -> Result<VPolytope<T>> {
    cfg.validate()?;
    let e = ops.rank_one_entry()?;
    check_dim("scheduling vector", 1, p_hat_i.len())?;
    VPolytope::symmetric_segment(unit(ops.n_x(), e.row, (e.gamma * p_hat_i[0]).abs() * cfg.delta1))
}

/// Error tube of one MPC step, `E_0 .. E_N` around `xhat_0 .. xhat_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeSequence<T: Real> {
    pub k: usize,
    pub polytopes: Vec<VPolytope<T>>,
    pub centers: Vec<DVector<T>>,
}

impl<T: Real> TubeSequence<T> {
    pub fn len(&self) -> usize {
        self.polytopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polytopes.is_empty()
    }
}

/// `E_0 = {0}`, `E_{i+1} = A_c0 E_i + V_i + W`.
pub fn tube_recursion<T: Real>(
    ops: &ErrorOperators<T>,
    cfg: &TubeConfig<T>,
    k: usize,
    p_hat: &SchedulingPrediction<T>,
    xhat: &[DVector<T>],
) -> Result<TubeSequence<T>> {
    check_dim("predicted states", p_hat.len() + 1, xhat.len())?;
    let n = ops.n_x();
    for x in xhat {
        check_dim("predicted state", n, x.len())?;
    }
    let w = build_w(ops, cfg)?;
    let mut polytopes = Vec::with_capacity(xhat.len());
    polytopes.push(VPolytope::origin(n));
    for p in &p_hat.values {
        let v = build_v(ops, cfg, p)?;
        let prev = polytopes.last().expect("non-empty");
        let next = prev.linear_image(ops.ac0())?.minkowski_sum(&v)?.minkowski_sum(&w)?;
        polytopes.push(next);
    }
    Ok(TubeSequence {
        k,
        polytopes,
        centers: xhat.to_vec(),
    })
}

/// Per-index variation premise: the scheduled coordinate `coord` of the true
/// state stays within `delta1` of the anchor, and the anchor within `delta1`
/// of the prediction.
#[derive(Debug, Clone, Copy)]
pub struct Premise<'a, T: Real> {
    pub anchors: &'a [DVector<T>],
    pub coord: usize,
    pub delta1: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentEntry<T> {
    pub i: usize,
    pub contained: bool,
    /// Distance from the true state to the translated tube set.
    pub residual: T,
    /// Whether the variation premise held at every index before `i`; `None`
    /// when no anchors are known.
    pub premise_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentReport<T> {
    pub k: usize,
    pub entries: Vec<ContainmentEntry<T>>,
}

impl<T: Real> ContainmentReport<T> {
    pub fn all_contained(&self) -> bool {
        self.entries.iter().all(|e| e.contained)
    }

    pub fn violations(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| !e.contained).map(|e| e.i).collect()
    }

    pub fn max_residual(&self) -> T {
        self.entries.iter().fold(T::zero(), |m, e| m.max(e.residual))
    }
}

/// Checks `x_i in xhat_i + E_i` for every index of the tube.
pub fn certify_containment<T: Real>(
    tube: &TubeSequence<T>,
    true_states: &[DVector<T>],
    tol: T,
    premise: Option<Premise<'_, T>>,
) -> Result<ContainmentReport<T>> {
    if true_states.len() < tube.len() {
        return Err(Error::Dimension {
            context: "true states",
            expected: tube.len(),
            got: true_states.len(),
        });
    }
    let mut entries = Vec::with_capacity(tube.len());
    let mut premise_so_far = true;
    for (i, (poly, center)) in tube.polytopes.iter().zip(&tube.centers).enumerate() {
        let set = poly.translate(center)?;
        let m = set.contains(&true_states[i], tol).map_err(|e| Error::Membership {
            index: i,
            source: Box::new(e),
        })?;
        let premise_ok = match &premise {
            Some(pr) if pr.anchors.len() + 1 >= tube.len() => {
                let ok = Some(premise_so_far);
                if i < pr.anchors.len() {
                    let c = pr.coord;
                    let slack = pr.delta1 * (T::one() + T::lit(1e-12));
                    let a = pr.anchors[i][c];
                    premise_so_far &= (true_states[i][c] - a).abs() <= slack && (a - center[c]).abs() <= slack;
                }
                ok
            }
            _ => None,
        };
        entries.push(ContainmentEntry {
            i,
            contained: m.contained,
            residual: m.residual,
            premise_ok,
        });
    }
    Ok(ContainmentReport { k: tube.k, entries })
}
