//! The unbalanced disk: a pendulum-like plant whose gravity torque
//! `mgl sin(theta)` is embedded exactly as `mgl sinc(theta) theta`.
//!
//! Forward-Euler discretization with state `x = (theta, omega)`:
//!
//! ```text
//!     A(p) = [ 1              t_s         ]     B = [ 0            ]
//!            [ t_s mgl/I p    1 - t_s/tau ]         [ t_s K_m/tau  ]
//! ```
//!
//! with `p = sinc(theta)`.

use crate::error::{Error, Result};
use crate::lpv::{AffineLpvModel, SincScheduling};
use crate::scalar::{sinc, sinc_prime, Real};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Physical parameters of the disk and the sampling time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiskParams {
    /// Inertia, kg m^2.
    pub inertia: f64,
    /// Mass, kg.
    pub mass: f64,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
    /// Distance of the mass from the axis, m.
    pub length: f64,
    /// Motor time constant, s.
    pub tau: f64,
    /// Motor gain, rad/(V s^2).
    pub motor_gain: f64,
    /// Sampling time, s.
    pub t_s: f64,
}

impl Default for DiskParams {
    fn default() -> Self {
        Self {
            inertia: 2.4e-4,
            mass: 0.076,
            gravity: 9.81,
            length: 0.041,
            tau: 0.4,
            motor_gain: 11.0,
            t_s: 0.01,
        }
    }
}

impl DiskParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("inertia", self.inertia),
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("length", self.length),
            ("tau", self.tau),
            ("motor_gain", self.motor_gain),
            ("t_s", self.t_s),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("disk parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `t_s m g l / I`, the scheduling coefficient in `A(p)`.
    pub fn gamma(&self) -> f64 {
        self.t_s * self.mass * self.gravity * self.length / self.inertia
    }

    /// `t_s K_m / tau`.
    pub fn input_gain(&self) -> f64 {
        self.t_s * self.motor_gain / self.tau
    }
}

/// Discrete LPV model of the disk with `p = sinc(theta)`.
pub fn disk_model<T: Real>(params: &DiskParams) -> Result<AffineLpvModel<T>> {
    params.validate()?;
    let t_s = T::lit(params.t_s);
    let a0 = DMatrix::from_row_slice(2, 2, &[T::one(), t_s, T::zero(), T::lit(1.0 - params.t_s / params.tau)]);
    let a1 = DMatrix::from_row_slice(2, 2, &[T::zero(), T::zero(), T::lit(params.gamma()), T::zero()]);
    let b = DMatrix::from_row_slice(2, 1, &[T::zero(), T::lit(params.input_gain())]);
    AffineLpvModel::new(vec![a0, a1], b, Arc::new(SincScheduling { coord: 0 }), t_s)
}

/// `sinc(theta) x = (sin theta, omega sinc theta)`.
pub fn scaled_state<T: Real>(x: &DVector<T>) -> DVector<T> {
    let s = sinc(x[0]);
    DVector::from_vec(vec![x[0].sin(), x[1] * s])
}

/// Jacobian of [`scaled_state`]:
/// `[[cos theta, 0], [omega (cos theta - sinc theta)/theta, sinc theta]]`.
pub fn scaled_state_jacobian<T: Real>(x: &DVector<T>) -> DMatrix<T> {
    let (theta, omega) = (x[0], x[1]);
    DMatrix::from_row_slice(2, 2, &[theta.cos(), T::zero(), omega * sinc_prime(theta), sinc(theta)])
}
