//! Target motion: nearly coordinated turn over the 5-state
//! `[x, vx, y, vy, psi]` with discrete white-noise acceleration mapping.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::geom::Point2D;
use crate::rng::RngStream;

pub type StateVector = SVector<f64, 5>;
pub type StateMatrix = SMatrix<f64, 5, 5>;

/// Ground-truth target state: position (m), velocity (m/s), turn rate (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
    pub turn_rate: f64,
}

impl TargetState {
    pub fn to_vector(&self) -> StateVector {
        StateVector::from_column_slice(&[self.x, self.vx, self.y, self.vy, self.turn_rate])
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self {
            x: v[0],
            vx: v[1],
            y: v[2],
            vy: v[3],
            turn_rate: v[4],
        }
    }

    pub fn position(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

// Below this the turn factors switch to their series limits; the closed form
// divides by psi twice.
const TURN_EPS: f64 = 1e-8;

/// sin(w T)/w and (1 - cos(w T))/w with analytic psi -> 0 limits.
fn turn_factors(omega: f64, dt: f64) -> (f64, f64) {
    if omega.abs() < TURN_EPS {
        (dt, 0.5 * omega * dt * dt)
    } else {
        let a = omega * dt;
        ((a.sin()) / omega, (1.0 - a.cos()) / omega)
    }
}

/// Deterministic part of the coordinated-turn transition.
pub fn transition(state: &StateVector, dt: f64) -> StateVector {
    let (x, vx, y, vy, w) = (state[0], state[1], state[2], state[3], state[4]);
    let (s, c) = turn_factors(w, dt);
    let (sin_a, cos_a) = if w.abs() < TURN_EPS {
        (w * dt, 1.0 - 0.5 * (w * dt).powi(2))
    } else {
        (w * dt).sin_cos()
    };
    StateVector::from_column_slice(&[
        x + s * vx - c * vy,
        cos_a * vx - sin_a * vy,
        y + c * vx + s * vy,
        sin_a * vx + cos_a * vy,
        w,
    ])
}

/// Jacobian of [`transition`] evaluated at `state`.
pub fn transition_jacobian(state: &StateVector, dt: f64) -> StateMatrix {
    let (vx, vy, w) = (state[1], state[3], state[4]);
    let (s, c) = turn_factors(w, dt);
    let (sin_a, cos_a) = ((w * dt).sin(), (w * dt).cos());

    // d/dw of sin(wT)/w and (1-cos(wT))/w, with small-psi limits.
    let (ds_dw, dc_dw) = if w.abs() < TURN_EPS {
        (-dt.powi(3) * w / 3.0, 0.5 * dt * dt)
    } else {
        (
            (dt * cos_a) / w - sin_a / (w * w),
            (dt * sin_a) / w - (1.0 - cos_a) / (w * w),
        )
    };

    let mut f = StateMatrix::identity();
    f[(0, 1)] = s;
    f[(0, 3)] = -c;
    f[(0, 4)] = ds_dw * vx - dc_dw * vy;
    f[(1, 1)] = cos_a;
    f[(1, 3)] = -sin_a;
    f[(1, 4)] = dt * (-sin_a * vx - cos_a * vy);
    f[(2, 1)] = c;
    f[(2, 3)] = s;
    f[(2, 4)] = dc_dw * vx + ds_dw * vy;
    f[(3, 1)] = sin_a;
    f[(3, 3)] = cos_a;
    f[(3, 4)] = dt * (cos_a * vx - sin_a * vy);
    f[(4, 4)] = 1.0;
    f[(0, 0)] = 1.0;
    f[(2, 2)] = 1.0;
    f
}

/// Process noise covariance: piecewise-constant acceleration gain
/// `[dt^2/2, dt]` per axis, additive on the turn rate.
pub fn process_noise(cfg: &WorldConfig) -> StateMatrix {
    let dt = cfg.dt_s;
    let g0 = dt * dt / 2.0;
    let g1 = dt;
    let mut q = StateMatrix::zeros();
    for (offset, sigma) in [(0, cfg.sigma_proc_x), (2, cfg.sigma_proc_y)] {
        let s2 = sigma * sigma;
        q[(offset, offset)] = s2 * g0 * g0;
        q[(offset, offset + 1)] = s2 * g0 * g1;
        q[(offset + 1, offset)] = s2 * g0 * g1;
        q[(offset + 1, offset + 1)] = s2 * g1 * g1;
    }
    q[(4, 4)] = cfg.sigma_proc_turn_rad * cfg.sigma_proc_turn_rad;
    q
}

/// One ground-truth step: rotate by the turn model, then add process noise.
pub fn propagate_target(state: &TargetState, cfg: &WorldConfig, rng: &mut RngStream) -> TargetState {
    let mut v = transition(&state.to_vector(), cfg.dt_s);
    let g0 = cfg.dt_s * cfg.dt_s / 2.0;
    let g1 = cfg.dt_s;
    let ax = rng.normal(0.0, cfg.sigma_proc_x);
    let ay = rng.normal(0.0, cfg.sigma_proc_y);
    v[0] += g0 * ax;
    v[1] += g1 * ax;
    v[2] += g0 * ay;
    v[3] += g1 * ay;
    v[4] += rng.normal(0.0, cfg.sigma_proc_turn_rad);
    TargetState::from_vector(&v)
}

/// One-step Gaussian prediction shared by the local filter and the fusion
/// pipeline: mean through the transition, covariance through its Jacobian
/// plus process noise.
pub fn predict_gaussian(
    mean: &StateVector,
    cov: &StateMatrix,
    cfg: &WorldConfig,
) -> (StateVector, StateMatrix) {
    let f = transition_jacobian(mean, cfg.dt_s);
    let predicted_cov = f * cov * f.transpose() + process_noise(cfg);
    (transition(mean, cfg.dt_s), symmetrize(&predicted_cov))
}

/// Force symmetry after covariance arithmetic.
pub fn symmetrize(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}
