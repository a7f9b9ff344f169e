//! Command-line front end: `simulate`, `tube` and `check`.
//!
//! Exit codes: 0 success, 1 configuration/solver/file error, 2 containment
//! violation.

use crate::bench::{
    self, BenchmarkScenario, ContainmentSummary, Manifest, MpcSettings, RegulationSettings, SynthesisSettings,
    TubeSettings,
};
use crate::disk::DiskParams;
use crate::error::{Error, Result};
use crate::io;
use crate::mpc::SchedulingPrediction;
use crate::tube::{self, ErrorOperators, Premise, TubeSequence};
use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// JSON run configuration. Every field is optional; `{}` is the default
/// benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub disk: DiskParams,
    pub x0: [f64; 2],
    pub x_ref: [f64; 2],
    pub steps: usize,
    pub mpc: MpcSettings,
    pub tube: TubeSettings,
    pub synthesis: SynthesisSettings,
    pub regulation: RegulationSettings,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub with_tubes: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_scenario(BenchmarkScenario::default())
    }
}

impl RunConfig {
    pub fn from_scenario(s: BenchmarkScenario) -> Self {
        Self {
            disk: s.disk,
            x0: s.x0,
            x_ref: s.x_ref,
            steps: s.steps,
            mpc: s.mpc,
            tube: s.tube,
            synthesis: s.synthesis,
            regulation: s.regulation,
            out_dir: None,
            seed: 0,
            with_tubes: true,
        }
    }

    pub fn scenario(&self) -> BenchmarkScenario {
        BenchmarkScenario {
            disk: self.disk,
            x0: self.x0,
            x_ref: self.x_ref,
            steps: self.steps,
            mpc: self.mpc.clone(),
            tube: self.tube.clone(),
            synthesis: self.synthesis.clone(),
            regulation: self.regulation.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_file(path)?)
    }
}

#[derive(Debug, Parser)]
#[command(name = "lpvtube", version, about = "LPV-MPC with polytopic error tubes on the unbalanced disk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the closed-loop benchmark and write trace, tubes and manifest.
    Simulate {
        /// JSON configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides `out_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        no_tubes: bool,
    },
    /// Recompute the tube of step `k` from a recorded run.
    Tube {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        k: usize,
        /// Destination file; defaults to `tube_k<k>.csv` in the trace directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-certify containment for every step of a recorded run.
    Check {
        #[arg(long)]
        trace: PathBuf,
    },
}

/// Parses arguments and runs the command, returning the exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Simulate {
            config,
            out,
            steps,
            no_tubes,
        } => cmd_simulate(config.as_deref(), out.as_deref(), steps, no_tubes),
        Command::Tube { trace, k, out } => cmd_tube(&trace, k, out.as_deref()),
        Command::Check { trace } => cmd_check(&trace),
    }
}

fn fail(e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_ERROR
}

fn containment_line(c: &ContainmentSummary) -> String {
    format!(
        "containment {}/{} ({:.2}%), premise {}/{}",
        c.passed,
        c.checked,
        100.0 * c.rate(),
        c.premise_satisfied,
        c.premise_checked
    )
}

pub fn cmd_simulate(config: Option<&Path>, out: Option<&Path>, steps: Option<usize>, no_tubes: bool) -> i32 {
    let mut cfg = match config.map(RunConfig::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => return fail(e),
    };
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if no_tubes {
        cfg.with_tubes = false;
    }
    let Some(out_dir) = out.map(Path::to_path_buf).or_else(|| cfg.out_dir.clone()) else {
        return fail("no output directory (use --out or out_dir)");
    };
    let scenario = cfg.scenario();
    log::info!("running {} steps into {}", scenario.steps, out_dir.display());
    let run = match bench::run_benchmark(&scenario, cfg.with_tubes, cfg.seed, &out_dir) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let s = &run.summary;
    let [theta, omega] = s.regulation.final_state;
    let mut line = format!(
        "steps {} final state ({theta:.6}, {omega:.6}) mean qp time {:.3e} s",
        s.steps_completed, s.timing.mean_qp_time
    );
    if let Some(c) = &s.containment {
        line.push_str(&format!(", {}", containment_line(c)));
    }
    println!("{line}");
    if s.timing.mean_qp_time >= scenario.disk.t_s {
        log::warn!("mean QP time exceeds the sampling time");
    }
    if let Some(e) = &run.error {
        return fail(e);
    }
    match &s.containment {
        Some(c) if !c.violations.is_empty() => {
            eprintln!("containment violations at (k, i): {:?}", c.violations);
            EXIT_VIOLATION
        }
        _ => EXIT_OK,
    }
}

/// Recorded data of one step.
struct RecordedStep {
    state: DVector<f64>,
    inputs: Vec<DVector<f64>>,
    xhat: Vec<DVector<f64>>,
    scheduling: SchedulingPrediction<f64>,
}

fn load_manifest(dir: &Path) -> Result<Manifest> {
    let text = io::read_file(&dir.join(io::MANIFEST_FILE))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest: {e}")))
}

fn load_step(dir: &Path, trace: &[io::TraceRow], k: usize) -> Result<RecordedStep> {
    let row = trace
        .iter()
        .find(|r| r.k == k)
        .ok_or_else(|| Error::Invalid(format!("step {k} is not in the trace")))?;
    let pred = io::read_prediction(&io::read_file(&dir.join(io::prediction_file(k)))?)?;
    let anchors = io::read_anchors(&io::read_file(&dir.join(io::anchors_file(k)))?)?;
    if pred.is_empty() {
        return Err(Error::Parse(format!("{} is empty", io::prediction_file(k))));
    }
    let n = pred.len() - 1;
    let mut inputs = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for r in &pred[..n] {
        let (Some(u), Some(p)) = (r.u, r.phat) else {
            return Err(Error::Parse(format!("{}: row {} lacks u or phat", io::prediction_file(k), r.i)));
        };
        inputs.push(DVector::from_element(1, u));
        values.push(DVector::from_element(1, p));
    }
    let anchors: Vec<DVector<f64>> = anchors.iter().map(|a| DVector::from_row_slice(&a.anchor)).collect();
    let scheduling = if anchors.is_empty() {
        SchedulingPrediction::new(values)
    } else {
        SchedulingPrediction::with_anchors(values, anchors)?
    };
    Ok(RecordedStep {
        state: DVector::from_row_slice(&[row.theta, row.omega]),
        inputs,
        xhat: pred.iter().map(|r| DVector::from_row_slice(&r.xhat)).collect(),
        scheduling,
    })
}

fn recompute_tube(m: &Manifest, ops: &ErrorOperators<f64>, step: &RecordedStep, k: usize) -> Result<TubeSequence<f64>> {
    tube::tube_recursion(ops, &m.scenario.tube_config(), k, &step.scheduling, &step.xhat)
}

pub fn cmd_tube(dir: &Path, k: usize, out: Option<&Path>) -> i32 {
    let result = (|| -> Result<TubeSequence<f64>> {
        let m = load_manifest(dir)?;
        let trace = io::read_trace(&io::read_file(&dir.join(io::TRACE_FILE))?)?;
        let step = load_step(dir, &trace, k)?;
        let ops = ErrorOperators::new(&m.closed_loop()?);
        let t = recompute_tube(&m, &ops, &step, k)?;
        let dest = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join(io::tube_file(k)));
        std::fs::write(&dest, io::write_tube(&t))?;
        Ok(t)
    })();
    match result {
        Ok(t) => {
            let counts: Vec<String> = t.polytopes.iter().map(|p| p.num_vertices().to_string()).collect();
            println!("step {k}: {} sets, vertex counts {}", t.len(), counts.join(" "));
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

pub fn cmd_check(dir: &Path) -> i32 {
    let result = (|| -> Result<ContainmentSummary> {
        let m = load_manifest(dir)?;
        let trace = io::read_trace(&io::read_file(&dir.join(io::TRACE_FILE))?)?;
        if trace.is_empty() {
            return Err(Error::Empty("trace"));
        }
        let model = m.closed_loop()?;
        let ops = ErrorOperators::new(&model);
        let mut summary = ContainmentSummary::default();
        for row in &trace {
            let step = load_step(dir, &trace, row.k)?;
            let truth = model.simulate_true(&step.state, &step.inputs)?;
            let t = recompute_tube(&m, &ops, &step, row.k)?;
            let premise = step.scheduling.has_anchors().then_some(Premise {
                anchors: &step.scheduling.anchors,
                coord: 0,
                delta1: m.scenario.tube.delta1,
            });
            let report = tube::certify_containment(&t, &truth, m.scenario.tube.containment_tol, premise)?;
            summary.add(&report);
        }
        Ok(summary)
    })();
    match result {
        Ok(c) => {
            println!("{}", containment_line(&c));
            if c.violations.is_empty() {
                EXIT_OK
            } else {
                eprintln!("containment violations at (k, i): {:?}", c.violations);
                EXIT_VIOLATION
            }
        }
        Err(e) => fail(e),
    }
}
