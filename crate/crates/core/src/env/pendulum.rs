//! Torque-controlled inverted pendulum with early termination on failure.

use std::f64::consts::FRAC_PI_2;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::mdp::{Action, EnvStep, Environment, Policy, State};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    pub g: f64,
    pub length: f64,
    pub mass: f64,
    pub damping: f64,
    pub dt: f64,
    pub u_max: f64,
    /// Failure angle; the episode ends once `|theta|` exceeds it.
    pub theta_fail: f64,
    pub t_max: usize,
    pub theta0_range: f64,
    pub omega0_range: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            length: 1.0,
            mass: 1.0,
            damping: 0.1,
            dt: 0.05,
            u_max: 5.0,
            theta_fail: FRAC_PI_2,
            t_max: 200,
            theta0_range: 0.3,
            omega0_range: 0.5,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err("pendulum dt must be positive".into());
        }
        if !(self.u_max > 0.0) {
            return Err("pendulum u_max must be positive".into());
        }
        if !(self.theta_fail > 0.0 && self.theta_fail <= std::f64::consts::PI) {
            return Err("pendulum theta_fail must lie in (0, pi]".into());
        }
        if self.t_max == 0 {
            return Err("pendulum t_max must be at least 1".into());
        }
        Ok(())
    }
}

/// State `(theta, theta_dot)`, action `[torque]`.
#[derive(Clone, Debug, Default)]
pub struct Pendulum {
    pub params: PendulumParams,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Self { params }
    }
}

impl Environment for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn max_steps(&self) -> usize {
        self.params.t_max
    }

    fn initial_state(&self, rng: &mut Rng) -> State {
        let p = &self.params;
        let theta = rng.random_range(-p.theta0_range..=p.theta0_range);
        let omega = rng.random_range(-p.omega0_range..=p.omega0_range);
        State::from([theta, omega])
    }

    fn clip_action(&self, action: Action) -> Action {
        let u = self.params.u_max;
        Action::from([action[0].clamp(-u, u)])
    }

    fn step(&self, state: &State, action: &Action) -> EnvStep {
        let p = &self.params;
        let (theta, omega) = (state[0], state[1]);
        let u = action[0].clamp(-p.u_max, p.u_max);
        // semi-implicit Euler
        let accel = (p.g / p.length) * theta.sin() + u / (p.mass * p.length * p.length)
            - p.damping * omega;
        let omega_next = omega + p.dt * accel;
        let theta_next = theta + p.dt * omega_next;
        let terminal = theta_next.abs() > p.theta_fail;
        EnvStep {
            next_state: State::from([theta_next, omega_next]),
            reward: if terminal { 0.0 } else { 1.0 },
            terminal,
        }
    }
}

/// PD balance controller `u = clip(-kp*theta - kd*theta_dot)`.
#[derive(Clone, Debug)]
pub struct PendulumExpert {
    pub kp: f64,
    pub kd: f64,
    pub u_max: f64,
}

impl PendulumExpert {
    pub const KP: f64 = 12.0;
    pub const KD: f64 = 3.0;

    pub fn new(params: &PendulumParams) -> Self {
        Self {
            kp: Self::KP,
            kd: Self::KD,
            u_max: params.u_max,
        }
    }
}

impl Policy for PendulumExpert {
    fn act(&self, state: &State) -> Action {
        let u = -self.kp * state[0] - self.kd * state[1];
        Action::from([u.clamp(-self.u_max, self.u_max)])
    }

    fn state_dim(&self) -> Option<usize> {
        Some(2)
    }

    fn action_dim(&self) -> Option<usize> {
        Some(1)
    }
}
