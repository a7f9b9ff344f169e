//! LPV model predictive control with recursive polytopic error tubes.
//!
//! The numeric modules are generic over the scalar type ([`Real`], i.e. `f32`
//! or `f64`); the benchmark, file formats and command line work in `f64`.

pub mod bench;
pub mod cli;
pub mod disk;
pub mod error;
pub mod io;
pub mod lpv;
pub mod mpc;
pub mod polytope;
pub mod qp;
pub mod scalar;
pub mod synthesis;
pub mod tube;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases.
pub type VPolytope = polytope::VPolytope<f64>;
pub type QpProblem = qp::QpProblem<f64>;
pub type QpSolution = qp::QpSolution<f64>;
pub type AffineLpvModel = lpv::AffineLpvModel<f64>;
pub type ClosedLoopModel = lpv::ClosedLoopModel<f64>;
pub type MpcConfig = mpc::MpcConfig<f64>;
pub type SchedulingPrediction = mpc::SchedulingPrediction<f64>;
pub type SimTrace = mpc::SimTrace<f64>;
pub type TubeConfig = tube::TubeConfig<f64>;
pub type TubeSequence = tube::TubeSequence<f64>;
pub type ErrorOperators = tube::ErrorOperators<f64>;
pub type BenchmarkScenario = bench::BenchmarkScenario;
