//! Planar double integrator, `p' = p + dt*v`, `v' = v + dt*u`.
//!
//! State layout: `[p_x, p_y, v_x, v_y]`; action is the acceleration, clipped
//! per component. The expert is a saturated discrete-time LQR.

use nalgebra::{SMatrix, SVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::mdp::{Action, EnvStep, Environment, Policy, State};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleIntegratorParams {
    pub dt: f64,
    pub accel_cap: f64,
    pub t_max: usize,
    pub p0_range: f64,
    pub v0_range: f64,
    /// LQR state and input weights (scalar multiples of identity).
    pub q_weight: f64,
    pub r_weight: f64,
}

impl Default for DoubleIntegratorParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            accel_cap: 1.0,
            t_max: 150,
            p0_range: 1.0,
            v0_range: 0.3,
            q_weight: 1.0,
            r_weight: 1.0,
        }
    }
}

impl DoubleIntegratorParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err("double integrator dt must be positive".into());
        }
        if !(self.accel_cap > 0.0) {
            return Err("double integrator accel_cap must be positive".into());
        }
        if !(self.q_weight > 0.0 && self.r_weight > 0.0) {
            return Err("double integrator LQR weights must be positive".into());
        }
        if self.t_max == 0 {
            return Err("double integrator t_max must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct DoubleIntegrator {
    pub params: DoubleIntegratorParams,
}

impl DoubleIntegrator {
    pub fn new(params: DoubleIntegratorParams) -> Self {
        Self { params }
    }
}

impl Environment for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        self.params.t_max
    }

    fn initial_state(&self, rng: &mut Rng) -> State {
        let p = &self.params;
        let mut draw = |r: f64| rng.random_range(-r..=r);
        let px = draw(p.p0_range);
        let py = draw(p.p0_range);
        let vx = draw(p.v0_range);
        let vy = draw(p.v0_range);
        State::from([px, py, vx, vy])
    }

    fn clip_action(&self, action: Action) -> Action {
        let c = self.params.accel_cap;
        Action::from([action[0].clamp(-c, c), action[1].clamp(-c, c)])
    }

    fn step(&self, state: &State, action: &Action) -> EnvStep {
        let dt = self.params.dt;
        let c = self.params.accel_cap;
        let u = [action[0].clamp(-c, c), action[1].clamp(-c, c)];
        let next = [
            state[0] + dt * state[2],
            state[1] + dt * state[3],
            state[2] + dt * u[0],
            state[3] + dt * u[1],
        ];
        EnvStep {
            reward: -next[0].hypot(next[1]),
            next_state: State::from(next),
            terminal: false,
        }
    }
}

type Mat4 = SMatrix<f64, 4, 4>;
type Mat42 = SMatrix<f64, 4, 2>;
type Mat2 = SMatrix<f64, 2, 2>;

/// Infinite-horizon discrete LQR gain by fixed-point Riccati iteration.
pub fn lqr_gain(params: &DoubleIntegratorParams) -> SMatrix<f64, 2, 4> {
    let dt = params.dt;
    let mut a = Mat4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    let mut b = Mat42::zeros();
    b[(2, 0)] = dt;
    b[(3, 1)] = dt;
    let q = Mat4::identity() * params.q_weight;
    let r = Mat2::identity() * params.r_weight;

    let mut p = q;
    for _ in 0..100_000 {
        let btp = b.transpose() * p;
        let s = (r + btp * b).try_inverse().expect("R + B'PB is positive definite");
        let next = q + a.transpose() * p * a - a.transpose() * p * b * s * btp * a;
        let delta = (next - p).abs().max();
        p = next;
        if delta < 1e-12 * p.abs().max().max(1.0) {
            break;
        }
    }
    let btp = b.transpose() * p;
    (r + btp * b).try_inverse().expect("positive definite") * btp * a
}

#[derive(Clone, Debug)]
pub struct DoubleIntegratorExpert {
    pub gain: SMatrix<f64, 2, 4>,
    pub accel_cap: f64,
}

impl DoubleIntegratorExpert {
    pub fn new(params: &DoubleIntegratorParams) -> Self {
        Self {
            gain: lqr_gain(params),
            accel_cap: params.accel_cap,
        }
    }
}

impl Policy for DoubleIntegratorExpert {
    fn act(&self, state: &State) -> Action {
        let x = SVector::<f64, 4>::from_column_slice(state);
        let u = -(self.gain * x);
        let c = self.accel_cap;
        Action::from([u[0].clamp(-c, c), u[1].clamp(-c, c)])
    }

    fn state_dim(&self) -> Option<usize> {
        Some(4)
    }

    fn action_dim(&self) -> Option<usize> {
        Some(2)
    }
}
