//! The unbalanced-disk regulator: scenario defaults, synthesis, closed-loop
//! run with tubes and containment, and the files describing a run.

use crate::disk::{disk_model, DiskParams};
use crate::error::{Error, Result};
use crate::io::{self, AnchorRow, PredictionRow, TraceRow};
use crate::lpv::ClosedLoopModel;
use crate::mpc::{self, AnchorGapRows, BoxBounds, MpcConfig, SimTrace};
use crate::qp::QpSettings;
use crate::scalar::sinc;
use crate::synthesis::{self, IterSettings, SynthesisResult};
use crate::tube::{self, ContainmentReport, ErrorOperators, Premise, TubeConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Index of the scheduled coordinate (`theta`).
const THETA: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcSettings {
    pub horizon: usize,
    pub q_diag: [f64; 2],
    pub r: f64,
    pub theta_max: f64,
    pub omega_max: f64,
    pub u_max: f64,
    /// Bound the plant input `K xhat + u` instead of the MPC correction.
    pub bound_total_input: bool,
    pub max_iter_inner: usize,
    pub max_iter_inner_first_step: usize,
    pub warm_start_steps: usize,
    pub eps_inner: f64,
    /// Add `|xhat_i[theta] - a_i[theta]| <= delta1` rows to the QP.
    pub enforce_delta1_in_qp: bool,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for MpcSettings {
    fn default() -> Self {
        Self {
            horizon: 10,
            q_diag: [8.0, 0.1],
            r: 0.5,
            theta_max: 2.0 * PI,
            omega_max: 10.0 * PI,
            u_max: 10.0,
            bound_total_input: true,
            max_iter_inner: 1,
            max_iter_inner_first_step: 10,
            warm_start_steps: 1,
            eps_inner: 1e-7,
            enforce_delta1_in_qp: false,
            qp_tol: 1e-8,
            qp_max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TubeSettings {
    pub delta1: f64,
    pub delta2_present: bool,
    pub xi_interval: [f64; 2],
    pub containment_tol: f64,
}

impl Default for TubeSettings {
    fn default() -> Self {
        Self {
            delta1: 0.01 * 10.0 * PI,
            delta2_present: false,
            xi_interval: [PI, 2.0 * PI],
            containment_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSettings {
    /// Scheduling value the gain is designed at.
    pub nominal_p: f64,
    /// Points of the certification grid over the attainable scheduling range.
    pub grid_points: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            nominal_p: 1.0,
            grid_points: 41,
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Thresholds of the regulation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegulationSettings {
    pub checkpoint_step: usize,
    pub checkpoint_theta_tol: f64,
    pub final_theta_tol: f64,
    pub final_omega_tol: f64,
    pub overshoot_tol: f64,
}

impl Default for RegulationSettings {
    fn default() -> Self {
        Self {
            checkpoint_step: 60,
            checkpoint_theta_tol: 0.1,
            final_theta_tol: 0.05,
            final_omega_tol: 0.5,
            overshoot_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkScenario {
    pub disk: DiskParams,
    pub x0: [f64; 2],
    pub x_ref: [f64; 2],
    pub steps: usize,
    pub mpc: MpcSettings,
    pub tube: TubeSettings,
    pub synthesis: SynthesisSettings,
    pub regulation: RegulationSettings,
}

impl Default for BenchmarkScenario {
    fn default() -> Self {
        Self {
            disk: DiskParams::default(),
            x0: [-6.0, 0.0],
            x_ref: [0.0, 0.0],
            steps: 100,
            mpc: MpcSettings::default(),
            tube: TubeSettings::default(),
            synthesis: SynthesisSettings::default(),
            regulation: RegulationSettings::default(),
        }
    }
}

pub fn default_scenario() -> BenchmarkScenario {
    BenchmarkScenario::default()
}

impl BenchmarkScenario {
    pub fn validate(&self) -> Result<()> {
        self.disk.validate()?;
        let m = &self.mpc;
        if self.steps == 0 {
            return Err(Error::Invalid("steps must be at least 1".into()));
        }
        for (name, v) in [("theta_max", m.theta_max), ("omega_max", m.omega_max), ("u_max", m.u_max), ("r", m.r)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("mpc.{name} must be positive, got {v}")));
            }
        }
        if m.q_diag.iter().any(|q| !(*q >= 0.0 && q.is_finite())) {
            return Err(Error::Invalid("mpc.q_diag must be nonnegative".into()));
        }
        if !(m.eps_inner > 0.0) || !(m.qp_tol > 0.0) || m.qp_max_iter == 0 {
            return Err(Error::Invalid("mpc tolerances and iteration limits must be positive".into()));
        }
        if !(self.tube.containment_tol > 0.0) {
            return Err(Error::Invalid("tube.containment_tol must be positive".into()));
        }
        if self.synthesis.grid_points == 0 {
            return Err(Error::Invalid("synthesis.grid_points must be at least 1".into()));
        }
        self.tube_config().validate()
    }

    pub fn tube_config(&self) -> TubeConfig<f64> {
        TubeConfig {
            delta1: self.tube.delta1,
            delta2_present: self.tube.delta2_present,
            xi_interval: (self.tube.xi_interval[0], self.tube.xi_interval[1]),
        }
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.x0)
    }

    pub fn x_ref(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.x_ref)
    }

    pub fn q(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(&self.mpc.q_diag))
    }

    pub fn r(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.mpc.r)
    }

    /// Scheduling grid spanning `sinc(theta)` over `|theta| <= theta_max`.
    pub fn scheduling_grid(&self) -> Vec<DVector<f64>> {
        let (lo, hi) = sinc_range(self.mpc.theta_max);
        synthesis::sampled_grid(lo, hi, self.synthesis.grid_points, |p| p)
    }

    /// MPC configuration with terminal weight `p`.
    pub fn mpc_config(&self, p: DMatrix<f64>) -> Result<MpcConfig<f64>> {
        let m = &self.mpc;
        Ok(MpcConfig {
            horizon: m.horizon,
            q: self.q(),
            r: self.r(),
            p,
            state_bounds: BoxBounds::symmetric(DVector::from_row_slice(&[m.theta_max, m.omega_max]))?,
            input_bounds: BoxBounds::symmetric(DVector::from_element(1, m.u_max))?,
            bound_total_input: m.bound_total_input,
            max_iter_inner: m.max_iter_inner,
            max_iter_inner_first_step: m.max_iter_inner_first_step,
            warm_start_steps: m.warm_start_steps,
            eps_inner: m.eps_inner,
            anchor_gap: m.enforce_delta1_in_qp.then_some(AnchorGapRows {
                coord: THETA,
                delta: self.tube.delta1,
            }),
            qp: QpSettings {
                tol: m.qp_tol,
                max_iter: m.qp_max_iter,
            },
        })
    }
}

/// Extremes of `sinc` over `[-theta_max, theta_max]`.
pub fn sinc_range(theta_max: f64) -> (f64, f64) {
    const SAMPLES: usize = 100_000;
    let mut lo = 1.0_f64;
    for s in 0..=SAMPLES {
        lo = lo.min(sinc(theta_max * s as f64 / SAMPLES as f64));
    }
    (lo, 1.0)
}

/// Model, controller and tube operators of a scenario.
#[derive(Debug, Clone)]
pub struct BenchmarkSetup {
    pub model: ClosedLoopModel<f64>,
    pub synthesis: SynthesisResult<f64>,
    pub mpc: MpcConfig<f64>,
    pub tube: TubeConfig<f64>,
    pub ops: ErrorOperators<f64>,
}

/// Synthesizes `K` and `P` and assembles the closed loop.
pub fn prepare(scenario: &BenchmarkScenario) -> Result<BenchmarkSetup> {
    scenario.validate()?;
    let open = disk_model::<f64>(&scenario.disk)?;
    let settings = IterSettings {
        tol: scenario.synthesis.tol,
        max_iter: scenario.synthesis.max_iter,
    };
    let synthesis = synthesis::robust_lpv_gain(
        &open,
        &scenario.q(),
        &scenario.r(),
        &DVector::from_element(1, scenario.synthesis.nominal_p),
        &scenario.scheduling_grid(),
        &settings,
    )?;
    let model = open.close_loop(synthesis.gain.clone())?;
    let mpc = scenario.mpc_config(synthesis.terminal.clone())?;
    let ops = ErrorOperators::new(&model);
    Ok(BenchmarkSetup {
        model,
        synthesis,
        mpc,
        tube: scenario.tube_config(),
        ops,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContainmentSummary {
    pub checked: usize,
    pub passed: usize,
    /// `(k, i)` pairs outside the tube.
    pub violations: Vec<(usize, usize)>,
    pub premise_checked: usize,
    pub premise_satisfied: usize,
    /// `(k, i)` pairs whose variation premise does not hold.
    pub premise_breaches: Vec<(usize, usize)>,
    pub max_residual: f64,
}

impl ContainmentSummary {
    pub fn rate(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }

    pub fn premise_rate(&self) -> f64 {
        if self.premise_checked == 0 {
            1.0
        } else {
            self.premise_satisfied as f64 / self.premise_checked as f64
        }
    }

    pub fn add(&mut self, report: &ContainmentReport<f64>) {
        for e in &report.entries {
            self.checked += 1;
            if e.contained {
                self.passed += 1;
            } else {
                self.violations.push((report.k, e.i));
            }
            if let Some(ok) = e.premise_ok {
                self.premise_checked += 1;
                if ok {
                    self.premise_satisfied += 1;
                } else {
                    self.premise_breaches.push((report.k, e.i));
                }
            }
            self.max_residual = self.max_residual.max(e.residual);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub qp_solves: usize,
    /// Mean wall-clock time of one QP solve, seconds.
    pub mean_qp_time: f64,
    /// Longest summed QP time of a single step, seconds.
    pub max_step_qp_time: f64,
    pub mean_inner_iters: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegulationSummary {
    pub final_state: [f64; 2],
    pub theta_at_checkpoint: Option<f64>,
    pub max_theta: f64,
    pub theta_monotone: bool,
    /// Realized states and plant inputs stayed within the boxes.
    pub bounds_respected: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub status: String,
    pub error: Option<String>,
    pub steps_completed: usize,
    pub regulation: RegulationSummary,
    pub containment: Option<ContainmentSummary>,
    pub timing: TimingSummary,
}

/// In-memory result of a benchmark run.
#[derive(Debug)]
pub struct BenchRun {
    pub scenario: BenchmarkScenario,
    pub setup: BenchmarkSetup,
    pub trace: SimTrace<f64>,
    pub reports: Vec<ContainmentReport<f64>>,
    pub summary: BenchSummary,
    pub error: Option<Error>,
}

/// Certifies the tube of every recorded step against the true response.
pub fn certify_trace(trace: &SimTrace<f64>, delta1: f64, tol: f64) -> Result<Vec<ContainmentReport<f64>>> {
    let mut reports = Vec::new();
    for step in &trace.steps {
        let Some(t) = &step.tube else { continue };
        let anchors = &step.mpc.scheduling_used.anchors;
        let premise = (!anchors.is_empty()).then_some(Premise {
            anchors,
            coord: THETA,
            delta1,
        });
        reports.push(tube::certify_containment(t, &step.true_prediction, tol, premise)?);
    }
    Ok(reports)
}

fn summarize(
    scenario: &BenchmarkScenario,
    trace: &SimTrace<f64>,
    reports: Option<&[ContainmentReport<f64>]>,
    error: Option<&Error>,
) -> BenchSummary {
    let reg = &scenario.regulation;
    let last = trace.states.last().expect("initial state recorded");
    let thetas: Vec<f64> = trace.states.iter().map(|x| x[THETA]).collect();
    let m = &scenario.mpc;
    let tol = 1e-6;
    let bounds_respected = trace
        .states
        .iter()
        .all(|x| x[0].abs() <= m.theta_max + tol && x[1].abs() <= m.omega_max + tol)
        && trace.steps.iter().all(|s| s.plant_input[0].abs() <= m.u_max + tol);
    let final_state = [last[0], last[1]];
    let regulation = RegulationSummary {
        final_state,
        theta_at_checkpoint: thetas.get(reg.checkpoint_step).copied(),
        max_theta: thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        theta_monotone: thetas.windows(2).all(|w| w[1] >= w[0]),
        bounds_respected,
        converged: final_state[0].abs() < reg.final_theta_tol && final_state[1].abs() < reg.final_omega_tol,
    };

    let solves: usize = trace.steps.iter().map(|s| s.mpc.inner_iterations).sum();
    let total: f64 = trace.steps.iter().map(|s| s.mpc.solve_time).sum();
    let timing = TimingSummary {
        qp_solves: solves,
        mean_qp_time: if solves > 0 { total / solves as f64 } else { 0.0 },
        max_step_qp_time: trace.steps.iter().map(|s| s.mpc.solve_time).fold(0.0, f64::max),
        mean_inner_iters: if trace.steps.is_empty() {
            0.0
        } else {
            solves as f64 / trace.steps.len() as f64
        },
    };
    let containment = reports.map(|rs| {
        let mut c = ContainmentSummary::default();
        for r in rs {
            c.add(r);
        }
        c
    });
    BenchSummary {
        status: if error.is_some() { "failed" } else { "ok" }.into(),
        error: error.map(|e| e.to_string()),
        steps_completed: trace.steps.len(),
        regulation,
        containment,
        timing,
    }
}

/// Runs the scenario in memory. Stage errors after setup are returned in
/// [`BenchRun::error`] with the partial trace kept.
pub fn simulate(scenario: &BenchmarkScenario, with_tubes: bool) -> Result<BenchRun> {
    let setup = prepare(scenario)?;
    let x_ref = mpc::constant_reference(&scenario.x_ref(), setup.mpc.horizon);
    let run = mpc::run_closed_loop(
        &setup.model,
        &setup.mpc,
        &scenario.x0(),
        &|_| x_ref.clone(),
        scenario.steps,
        with_tubes.then_some((&setup.ops, &setup.tube)),
    );
    let mut error = run.error;
    let trace = run.trace;
    let reports = if with_tubes {
        match certify_trace(&trace, scenario.tube.delta1, scenario.tube.containment_tol) {
            Ok(r) => Some(r),
            Err(e) => {
                error.get_or_insert(e);
                None
            }
        }
    } else {
        None
    };
    let summary = summarize(scenario, &trace, reports.as_deref(), error.as_ref());
    Ok(BenchRun {
        scenario: scenario.clone(),
        setup,
        trace,
        reports: reports.unwrap_or_default(),
        summary,
        error,
    })
}

fn row_major(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    /// Row-major.
    pub gain: Vec<Vec<f64>>,
    pub riccati: Vec<Vec<f64>>,
    pub terminal: Vec<Vec<f64>>,
    pub dare_residual: f64,
    pub lyapunov_residual: f64,
    pub nominal_p: f64,
    /// `(p, spectral radius of A(p) + BK)`.
    pub grid: Vec<(f64, f64)>,
}

impl SynthesisRecord {
    pub fn from_result(s: &SynthesisResult<f64>) -> Self {
        Self {
            gain: row_major(&s.gain),
            riccati: row_major(&s.riccati),
            terminal: row_major(&s.terminal),
            dare_residual: s.riccati_residual,
            lyapunov_residual: s.lyapunov_residual,
            nominal_p: s.nominal[0],
            grid: s.spectral_radii.iter().map(|(p, r)| (p[0], *r)).collect(),
        }
    }

    pub fn gain_matrix(&self) -> Result<DMatrix<f64>> {
        let rows = self.gain.len();
        let cols = self.gain.first().map_or(0, Vec::len);
        if rows == 0 || self.gain.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse("manifest gain is not a matrix".into()));
        }
        Ok(DMatrix::from_row_iterator(rows, cols, self.gain.iter().flatten().copied()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub scenario: BenchmarkScenario,
    pub with_tubes: bool,
    pub seed: u64,
    pub synthesis: SynthesisRecord,
    pub summary: BenchSummary,
}

impl Manifest {
    /// Closed loop of the recorded run, rebuilt from the stored gain.
    pub fn closed_loop(&self) -> Result<ClosedLoopModel<f64>> {
        disk_model::<f64>(&self.scenario.disk)?.close_loop(self.synthesis.gain_matrix()?)
    }
}

/// Prediction rows of one step.
pub fn prediction_rows(step: &mpc::StepRecord<f64>) -> Vec<PredictionRow> {
    let n = step.mpc.inputs.len();
    step.mpc
        .predicted_states
        .iter()
        .enumerate()
        .map(|(i, x)| PredictionRow {
            i,
            xhat: [x[0], x[1]],
            u: (i < n).then(|| step.mpc.inputs[i][0]),
            phat: (i < n).then(|| step.mpc.scheduling_used.values[i][0]),
        })
        .collect()
}

pub fn trace_rows(trace: &SimTrace<f64>) -> Vec<TraceRow> {
    trace
        .steps
        .iter()
        .map(|s| TraceRow {
            k: s.k,
            theta: s.state[0],
            omega: s.state[1],
            u: s.plant_input[0],
            p_realized: s.p_realized[0],
            cost: s.mpc.cost,
            inner_iters: s.mpc.inner_iterations,
            qp_time: s.mpc.solve_time,
        })
        .collect()
}

fn write(out_dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::write(out_dir.join(name), text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out_dir.join(name).display()))))
}

/// Writes the trace, per-step files and the manifest of `run`.
pub fn write_outputs(run: &BenchRun, with_tubes: bool, seed: u64, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write(out_dir, io::TRACE_FILE, &io::write_trace(&trace_rows(&run.trace)))?;
    for step in &run.trace.steps {
        let k = step.k;
        write(out_dir, &io::prediction_file(k), &io::write_prediction(&prediction_rows(step)))?;
        let anchors: Vec<AnchorRow> = step
            .mpc
            .scheduling_used
            .anchors
            .iter()
            .enumerate()
            .map(|(i, a)| AnchorRow { i, anchor: [a[0], a[1]] })
            .collect();
        write(out_dir, &io::anchors_file(k), &io::write_anchors(&anchors))?;
        if let Some(t) = &step.tube {
            write(out_dir, &io::tube_file(k), &io::write_tube(t))?;
        }
    }
    for r in &run.reports {
        write(out_dir, &io::containment_file(r.k), &io::write_containment(r))?;
    }
    let manifest = Manifest {
        scenario: run.scenario.clone(),
        with_tubes,
        seed,
        synthesis: SynthesisRecord::from_result(&run.setup.synthesis),
        summary: run.summary.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    write(out_dir, io::MANIFEST_FILE, &(json + "\n"))
}

/// [`simulate`] followed by [`write_outputs`].
pub fn run_benchmark(scenario: &BenchmarkScenario, with_tubes: bool, seed: u64, out_dir: &Path) -> Result<BenchRun> {
    let run = simulate(scenario, with_tubes)?;
    write_outputs(&run, with_tubes, seed, out_dir)?;
    Ok(run)
}
