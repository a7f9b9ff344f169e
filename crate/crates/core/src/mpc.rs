//! Receding-horizon control on the closed-loop LPV model.
//!
//! At every step the scheduling along the horizon is frozen to a prediction
//! `p_hat`, which turns the problem into a QP in the inputs only (states are
//! eliminated through the prediction matrices). The prediction is refined by
//! re-solving with the scheduling of the newly predicted trajectory, then
//! shifted forward for the next step.

use crate::error::{check_dim, Error, Result};
use crate::lpv::ClosedLoopModel;
use crate::qp::{self, QpProblem, QpSettings};
use crate::scalar::Real;
use crate::tube::{ErrorOperators, TubeConfig, TubeSequence};
use nalgebra::{DMatrix, DVector};
use std::time::Instant;

/// Elementwise box `lower <= v <= upper`. Infinite entries are unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds<T: Real> {
    pub lower: DVector<T>,
    pub upper: DVector<T>,
}

impl<T: Real> BoxBounds<T> {
    pub fn new(lower: DVector<T>, upper: DVector<T>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::Invalid("box bounds need lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]` in every coordinate.
    pub fn symmetric(radius: DVector<T>) -> Result<Self> {
        Self::new(-radius.clone(), radius)
    }

    pub fn unbounded(dim: usize) -> Self {
        let inf = T::max_value().expect("floating scalar");
        Self {
            lower: DVector::from_element(dim, -inf),
            upper: DVector::from_element(dim, inf),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, v: &DVector<T>, tol: T) -> bool {
        v.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(x, (l, u))| *x >= *l - tol && *x <= *u + tol)
    }

    fn is_finite_bound(v: T) -> bool {
        v.abs() < T::max_value().expect("floating scalar")
    }
}

/// Optional rows bounding the gap between predicted states and the states the
/// scheduling prediction was computed from, `|xhat_i[c] - a_i[c]| <= delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorGapRows<T> {
    pub coord: usize,
    pub delta: T,
}

#[derive(Debug, Clone)]
pub struct MpcConfig<T: Real> {
    pub horizon: usize,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
    /// Terminal weight.
    pub p: DMatrix<T>,
    pub state_bounds: BoxBounds<T>,
    pub input_bounds: BoxBounds<T>,
    /// Apply `input_bounds` to the plant input `K xhat + u` rather than to
    /// the MPC correction `u` alone.
    pub bound_total_input: bool,
    pub max_iter_inner: usize,
    pub max_iter_inner_first_step: usize,
    /// Steps `k < warm_start_steps` use `max_iter_inner_first_step`.
    pub warm_start_steps: usize,
    pub eps_inner: T,
    pub anchor_gap: Option<AnchorGapRows<T>>,
    pub qp: QpSettings<T>,
}

fn is_psd<T: Real>(m: &DMatrix<T>) -> bool {
    let sym = (m + m.transpose()) * T::lit(0.5);
    let scale = sym.amax().max(T::one());
    sym.symmetric_eigenvalues().iter().all(|&l| l >= -T::lit(1e-12) * scale)
}

impl<T: Real> MpcConfig<T> {
    pub fn validate(&self, n_x: usize, n_u: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        for (name, m, n) in [("Q", &self.q, n_x), ("P", &self.p, n_x), ("R", &self.r, n_u)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Invalid(format!("{name} must be {n}x{n}")));
            }
            if !is_psd(m) {
                return Err(Error::Invalid(format!("{name} must be positive semidefinite")));
            }
        }
        if self.r.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("R"));
        }
        check_dim("state bounds", n_x, self.state_bounds.dim())?;
        check_dim("input bounds", n_u, self.input_bounds.dim())?;
        if self.max_iter_inner == 0 || self.max_iter_inner_first_step == 0 {
            return Err(Error::Invalid("inner iteration limits must be at least 1".into()));
        }
        if let Some(g) = &self.anchor_gap {
            if g.coord >= n_x || g.delta <= T::zero() {
                return Err(Error::Invalid("anchor gap rows need a valid coordinate and positive delta".into()));
            }
        }
        Ok(())
    }

    /// Inner-iteration budget at step `k`.
    pub fn inner_budget(&self, k: usize) -> usize {
        if k < self.warm_start_steps {
            self.max_iter_inner_first_step
        } else {
            self.max_iter_inner
        }
    }
}

/// Scheduling along the horizon, `p_hat_0 .. p_hat_{N-1}`, with the states
/// they were evaluated at.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingPrediction<T: Real> {
    pub values: Vec<DVector<T>>,
    /// `anchors[i]` is the state `p_hat_i` was computed from; empty when
    /// unknown.
    pub anchors: Vec<DVector<T>>,
}

impl<T: Real> SchedulingPrediction<T> {
    pub fn new(values: Vec<DVector<T>>) -> Self {
        Self {
            values,
            anchors: Vec::new(),
        }
    }

    pub fn with_anchors(values: Vec<DVector<T>>, anchors: Vec<DVector<T>>) -> Result<Self> {
        check_dim("scheduling anchors", values.len(), anchors.len())?;
        Ok(Self { values, anchors })
    }

    /// `rho(x0, 0)` held over the whole horizon.
    pub fn initial(model: &ClosedLoopModel<T>, x0: &DVector<T>, horizon: usize) -> Self {
        let p = model.schedule(x0, &DVector::zeros(model.n_u()));
        Self {
            values: vec![p; horizon],
            anchors: vec![x0.clone(); horizon],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has_anchors(&self) -> bool {
        !self.anchors.is_empty()
    }

    /// 2-norm of the stacked difference to `other`.
    pub fn distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_squared())
            .fold(T::zero(), |acc, v| acc + v)
            .sqrt()
    }
}

/// `p_hat_{i|k+1} = p_hat_{i+1|k}`; the final slot repeats the last value.
pub fn shift_scheduling<T: Real>(prev: &SchedulingPrediction<T>) -> SchedulingPrediction<T> {
    fn shift<V: Clone>(v: &[V]) -> Vec<V> {
        match v.len() {
            0 => Vec::new(),
            n => {
                let mut out: Vec<V> = v[1..].to_vec();
                out.push(v[n - 1].clone());
                out
            }
        }
    }
    SchedulingPrediction {
        values: shift(&prev.values),
        anchors: shift(&prev.anchors),
    }
}

/// Problem 2 in condensed form: `xhat = Phi x_k + Gamma U` and
/// `J(U) = 1/2 U'HU + f'U + c`.
#[derive(Debug, Clone)]
pub struct CondensedQp<T: Real> {
    pub qp: QpProblem<T>,
    /// Stacked `Phi_0 .. Phi_N`, `(N+1) n_x x n_x`.
    pub phi: DMatrix<T>,
    /// Stacked `Gamma_0 .. Gamma_N`, `(N+1) n_x x N n_u`.
    pub gamma: DMatrix<T>,
    pub constant: T,
    pub x_k: DVector<T>,
    n_x: usize,
    n_u: usize,
}

impl<T: Real> CondensedQp<T> {
    pub fn horizon(&self) -> usize {
        self.gamma.ncols() / self.n_u
    }

    /// Predicted states `xhat_0 .. xhat_N` for the stacked inputs `u`.
    pub fn predict(&self, u: &DVector<T>) -> Vec<DVector<T>> {
        let stacked = &self.phi * &self.x_k + &self.gamma * u;
        (0..=self.horizon())
            .map(|i| stacked.rows(i * self.n_x, self.n_x).into_owned())
            .collect()
    }

    pub fn split_inputs(&self, u: &DVector<T>) -> Vec<DVector<T>> {
        (0..self.horizon())
            .map(|i| u.rows(i * self.n_u, self.n_u).into_owned())
            .collect()
    }

    /// QP objective plus constant, i.e. the MPC cost of `u`.
    pub fn cost(&self, u: &DVector<T>) -> T {
        self.qp.objective(u) + self.constant
    }
}

/// Builds the condensed QP for the scheduling `p_hat`. `x_ref` holds
/// `N + 1` reference states.
pub fn build_condensed_qp<T: Real>(
    model: &ClosedLoopModel<T>,
    cfg: &MpcConfig<T>,
    p_hat: &SchedulingPrediction<T>,
    x_k: &DVector<T>,
    x_ref: &[DVector<T>],
) -> Result<CondensedQp<T>> {
    let (n_x, n_u, n) = (model.n_x(), model.n_u(), cfg.horizon);
    check_dim("scheduling prediction length", n, p_hat.len())?;
    check_dim("reference length", n + 1, x_ref.len())?;
    check_dim("x_k", n_x, x_k.len())?;
    for r in x_ref {
        check_dim("reference state", n_x, r.len())?;
    }
    let nu_tot = n * n_u;

    let mut phi = DMatrix::zeros((n + 1) * n_x, n_x);
    let mut gamma = DMatrix::zeros((n + 1) * n_x, nu_tot);
    phi.view_mut((0, 0), (n_x, n_x)).fill_with_identity();
    for i in 0..n {
        let a = model.eval_ac(&p_hat.values[i])?;
        let phi_next = &a * phi.view((i * n_x, 0), (n_x, n_x));
        let mut gamma_next = &a * gamma.view((i * n_x, 0), (n_x, nu_tot));
        gamma_next.view_mut((0, i * n_u), (n_x, n_u)).copy_from(model.b());
        phi.view_mut(((i + 1) * n_x, 0), (n_x, n_x)).copy_from(&phi_next);
        gamma.view_mut(((i + 1) * n_x, 0), (n_x, nu_tot)).copy_from(&gamma_next);
    }

    // Block-diagonal weights.
    let mut q_bar = DMatrix::zeros((n + 1) * n_x, (n + 1) * n_x);
    for i in 0..n {
        q_bar.view_mut((i * n_x, i * n_x), (n_x, n_x)).copy_from(&cfg.q);
    }
    q_bar.view_mut((n * n_x, n * n_x), (n_x, n_x)).copy_from(&cfg.p);
    let mut r_bar = DMatrix::zeros(nu_tot, nu_tot);
    for i in 0..n {
        r_bar.view_mut((i * n_u, i * n_u), (n_u, n_u)).copy_from(&cfg.r);
    }

    let mut refs = DVector::zeros((n + 1) * n_x);
    for (i, r) in x_ref.iter().enumerate() {
        refs.rows_mut(i * n_x, n_x).copy_from(r);
    }
    let free = &phi * x_k - refs;
    let two = T::lit(2.0);
    let hessian = (gamma.transpose() * &q_bar * &gamma + r_bar) * two;
    let linear = gamma.transpose() * (&q_bar * &free) * two;
    let constant = free.dot(&(&q_bar * &free));

    let mut rows: Vec<(DVector<T>, T)> = Vec::new();
    let mut push_box = |coef: DMatrix<T>, offset: DVector<T>, bounds: &BoxBounds<T>| {
        // coef * U + offset within bounds, row by row.
        for j in 0..bounds.dim() {
            let c = coef.row(j).transpose();
            if BoxBounds::is_finite_bound(bounds.upper[j]) {
                rows.push((c.clone(), bounds.upper[j] - offset[j]));
            }
            if BoxBounds::is_finite_bound(bounds.lower[j]) {
                rows.push((-c, offset[j] - bounds.lower[j]));
            }
        }
    };
    for i in 0..=n {
        let g_i = gamma.view((i * n_x, 0), (n_x, nu_tot)).into_owned();
        let o_i = phi.view((i * n_x, 0), (n_x, n_x)) * x_k;
        push_box(g_i, o_i, &cfg.state_bounds);
    }
    for i in 0..n {
        let mut sel = DMatrix::zeros(n_u, nu_tot);
        sel.view_mut((0, i * n_u), (n_u, n_u)).fill_with_identity();
        if cfg.bound_total_input {
            let g_i = gamma.view((i * n_x, 0), (n_x, nu_tot));
            let o_i = model.gain() * (phi.view((i * n_x, 0), (n_x, n_x)) * x_k);
            push_box(model.gain() * g_i + sel, o_i, &cfg.input_bounds);
        } else {
            push_box(sel, DVector::zeros(n_u), &cfg.input_bounds);
        }
    }
    if let (Some(gap), true) = (&cfg.anchor_gap, p_hat.has_anchors()) {
        for i in 0..n {
            let row = gamma.row(i * n_x + gap.coord).transpose();
            let offset = phi.row(i * n_x + gap.coord).dot(&x_k.transpose()) - p_hat.anchors[i][gap.coord];
            rows.push((row.clone(), gap.delta - offset));
            rows.push((-row, gap.delta + offset));
        }
    }

    let m = rows.len();
    let mut g = DMatrix::zeros(m, nu_tot);
    let mut h = DVector::zeros(m);
    for (idx, (c, b)) in rows.into_iter().enumerate() {
        g.set_row(idx, &c.transpose());
        h[idx] = b;
    }
    let qp = QpProblem::new(hessian, linear, g, h)?;
    Ok(CondensedQp {
        qp,
        phi,
        gamma,
        constant,
        x_k: x_k.clone(),
        n_x,
        n_u,
    })
}

/// Stage-wise evaluation of the MPC cost along a trajectory.
pub fn trajectory_cost<T: Real>(
    cfg: &MpcConfig<T>,
    states: &[DVector<T>],
    inputs: &[DVector<T>],
    x_ref: &[DVector<T>],
) -> T {
    let n = cfg.horizon;
    let quad = |m: &DMatrix<T>, v: &DVector<T>| v.dot(&(m * v));
    let mut j = T::zero();
    for i in 0..n {
        j += quad(&cfg.q, &(&states[i] - &x_ref[i])) + quad(&cfg.r, &inputs[i]);
    }
    j + quad(&cfg.p, &(&states[n] - &x_ref[n]))
}

#[derive(Debug, Clone)]
pub struct MpcStepResult<T: Real> {
    /// `u_{0|k}`, the MPC correction applied on top of `K x_k`.
    pub u_applied: DVector<T>,
    /// `xhat_{0|k} .. xhat_{N|k}`.
    pub predicted_states: Vec<DVector<T>>,
    /// `u_{0|k} .. u_{N-1|k}`.
    pub inputs: Vec<DVector<T>>,
    /// Scheduling the returned solution was computed with.
    pub scheduling_used: SchedulingPrediction<T>,
    /// Scheduling re-evaluated along the returned prediction.
    pub scheduling_next: SchedulingPrediction<T>,
    pub inner_iterations: usize,
    pub gamma_history: Vec<T>,
    pub cost: T,
    /// Summed QP solve time over the inner iterations, seconds.
    pub solve_time: f64,
    pub kkt_residual: T,
}

/// Solves the QP, re-evaluates the scheduling along the prediction and
/// repeats until the change `gamma_j` drops below `eps_inner` or `max_iter`
/// solves have been made.
pub fn mpc_step<T: Real>(
    model: &ClosedLoopModel<T>,
    cfg: &MpcConfig<T>,
    p_hat: &SchedulingPrediction<T>,
    x_k: &DVector<T>,
    x_ref: &[DVector<T>],
    max_iter: usize,
) -> Result<MpcStepResult<T>> {
    let mut p = p_hat.clone();
    let mut gamma_history = Vec::new();
    let mut solve_time = 0.0;
    let mut j = 0;
    loop {
        j += 1;
        let cq = build_condensed_qp(model, cfg, &p, x_k, x_ref)?;
        let sol = qp::solve(&cq.qp, &cfg.qp)?;
        solve_time += sol.solve_time;
        let states = cq.predict(&sol.x);
        let inputs = cq.split_inputs(&sol.x);

        let values: Vec<DVector<T>> = (0..cfg.horizon)
            .map(|i| model.schedule(&states[i], &model.total_input(&states[i], &inputs[i])))
            .collect();
        let next = SchedulingPrediction {
            values,
            anchors: states[..cfg.horizon].to_vec(),
        };
        let gamma = next.distance(&p);
        gamma_history.push(gamma);

        if j >= max_iter || gamma < cfg.eps_inner {
            let cost = trajectory_cost(cfg, &states, &inputs, x_ref);
            return Ok(MpcStepResult {
                u_applied: inputs[0].clone(),
                predicted_states: states,
                inputs,
                scheduling_used: p,
                scheduling_next: next,
                inner_iterations: j,
                gamma_history,
                cost,
                solve_time,
                kkt_residual: sol.kkt_residual,
            });
        }
        p = next;
    }
}

/// Everything recorded at one closed-loop step.
#[derive(Debug, Clone)]
pub struct StepRecord<T: Real> {
    pub k: usize,
    /// Measured state `x_k`.
    pub state: DVector<T>,
    /// Plant input `K x_k + u_{0|k}`.
    pub plant_input: DVector<T>,
    /// `rho(x_k, plant_input)`.
    pub p_realized: DVector<T>,
    pub mpc: MpcStepResult<T>,
    /// True response `x_{0|k} .. x_{N|k}` to the planned inputs.
    pub true_prediction: Vec<DVector<T>>,
    pub tube: Option<TubeSequence<T>>,
    /// Wall-clock time of the whole step (all QPs plus bookkeeping), seconds.
    pub step_time: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SimTrace<T: Real> {
    pub steps: Vec<StepRecord<T>>,
    /// `x_0 .. x_K` (one more entry than `steps`).
    pub states: Vec<DVector<T>>,
}

/// Closed-loop run; `error` is set when a step failed, with the trace kept up
/// to that point.
#[derive(Debug)]
pub struct ClosedLoopRun<T: Real> {
    pub trace: SimTrace<T>,
    pub error: Option<Error>,
}

impl<T: Real> ClosedLoopRun<T> {
    pub fn into_result(self) -> Result<SimTrace<T>> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.trace),
        }
    }
}

/// Reference `x_ref` held over the horizon.
pub fn constant_reference<T: Real>(x_ref: &DVector<T>, horizon: usize) -> Vec<DVector<T>> {
    vec![x_ref.clone(); horizon + 1]
}

/// Runs the receding-horizon loop for `steps` steps from `x0`.
///
/// `reference(k)` returns the `N + 1` reference states for step `k`. When
/// `tubes` is given, the error tube of every step is computed and stored.
pub fn run_closed_loop<T: Real>(
    model: &ClosedLoopModel<T>,
    cfg: &MpcConfig<T>,
    x0: &DVector<T>,
    reference: &dyn Fn(usize) -> Vec<DVector<T>>,
    steps: usize,
    tubes: Option<(&ErrorOperators<T>, &TubeConfig<T>)>,
) -> ClosedLoopRun<T> {
    let mut trace = SimTrace {
        steps: Vec::with_capacity(steps),
        states: vec![x0.clone()],
    };
    if let Err(e) = cfg.validate(model.n_x(), model.n_u()) {
        return ClosedLoopRun { trace, error: Some(e) };
    }
    if steps == 0 {
        return ClosedLoopRun {
            trace,
            error: Some(Error::Invalid("closed loop needs at least one step".into())),
        };
    }
    if x0.len() != model.n_x() {
        return ClosedLoopRun {
            trace,
            error: Some(Error::Dimension {
                context: "x0",
                expected: model.n_x(),
                got: x0.len(),
            }),
        };
    }

    let mut p_hat = SchedulingPrediction::initial(model, x0, cfg.horizon);
    for k in 0..steps {
        let started = Instant::now();
        let x_k = trace.states[k].clone();
        let outcome = (|| -> Result<StepRecord<T>> {
            let x_ref = reference(k);
            let step = mpc_step(model, cfg, &p_hat, &x_k, &x_ref, cfg.inner_budget(k))?;
            let true_prediction = model.simulate_true(&x_k, &step.inputs)?;
            let tube = match tubes {
                Some((ops, tcfg)) => Some(crate::tube::tube_recursion(
                    ops,
                    tcfg,
                    k,
                    &step.scheduling_used,
                    &step.predicted_states,
                )?),
                None => None,
            };
            let plant_input = model.total_input(&x_k, &step.u_applied);
            let p_realized = model.schedule(&x_k, &plant_input);
            Ok(StepRecord {
                k,
                state: x_k.clone(),
                plant_input,
                p_realized,
                true_prediction,
                tube,
                step_time: 0.0,
                mpc: step,
            })
        })();
        match outcome {
            Ok(mut rec) => {
                rec.step_time = started.elapsed().as_secs_f64();
                p_hat = shift_scheduling(&rec.mpc.scheduling_next);
                trace.states.push(rec.true_prediction[1].clone());
                trace.steps.push(rec);
            }
            Err(e) => {
                return ClosedLoopRun {
                    trace,
                    error: Some(Error::Step {
                        step: k,
                        source: Box::new(e),
                    }),
                }
            }
        }
    }
    ClosedLoopRun { trace, error: None }
}
